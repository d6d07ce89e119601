#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace datscore::csv {

// Minimal comma-separated table: a header row plus string cells. No quoting.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws ValidationError naming the file when absent.
  std::size_t column(std::string_view name) const;
  std::string source;
};

Table read(const std::filesystem::path& path);
std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

double parse_double(std::string_view s, std::string_view context);
long long parse_int(std::string_view s, std::string_view context);

// Shortest representation that round-trips to the same double.
std::string format_double(double v);

}  // namespace datscore::csv

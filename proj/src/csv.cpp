#include "datscore/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>

#include "datscore/error.hpp"

namespace datscore::csv {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ValidationError(fmt::format("{}: missing column '{}'", source, name));
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  Table t;
  t.source = path.string();
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ValidationError(fmt::format("{}:{}: expected {} fields, found {}", t.source, line_no,
                                        t.header.size(), cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError(fmt::format("{}: empty file", t.source));
  return t;
}

double parse_double(std::string_view s, std::string_view context) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(fmt::format("{}: '{}' is not a number", context, s));
  return v;
}

long long parse_int(std::string_view s, std::string_view context) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(fmt::format("{}: '{}' is not an integer", context, s));
  return v;
}

std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace datscore::csv

#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "datscore/plink_io.hpp"

namespace testing {

// A fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("datscore_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline datscore::plink::GenotypeMatrix random_matrix(std::mt19937_64& rng, std::size_t n_samples,
                                                     std::size_t n_variants) {
  using namespace datscore::plink;
  std::vector<SampleRecord> samples;
  for (std::size_t i = 0; i < n_samples; ++i) {
    SampleRecord s;
    s.family_id = "F" + std::to_string(i);
    s.individual_id = "S" + std::to_string(i);
    s.sex = static_cast<Sex>(rng() % 3);
    if (rng() % 2) s.phenotype = std::to_string(1 + rng() % 2);
    samples.push_back(s);
  }
  static const char* bases[] = {"A", "C", "G", "T"};
  std::vector<VariantRecord> variants;
  for (std::size_t v = 0; v < n_variants; ++v) {
    VariantRecord r;
    r.chromosome = std::to_string(1 + v % 22);
    r.snp_id = "rs" + std::to_string(1000 + v);
    r.genetic_distance = static_cast<double>(rng() % 1000) / 1000.0;
    r.position = static_cast<std::int64_t>(1000 + 17 * v);
    const auto a = rng() % 4;
    r.allele1 = bases[a];
    r.allele2 = bases[(a + 1 + rng() % 3) % 4];
    variants.push_back(r);
  }
  std::vector<Call> calls(n_samples * n_variants);
  static const Call codes[] = {Call::hom_a1, Call::missing, Call::het, Call::hom_a2};
  for (auto& c : calls) c = codes[rng() % 4];
  return GenotypeMatrix::from_calls(std::move(samples), std::move(variants), calls);
}

}  // namespace testing

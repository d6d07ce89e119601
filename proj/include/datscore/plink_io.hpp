#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace datscore::plink {

// 2-bit PLINK 1 call codes, as stored in the .bed file.
enum class Call : std::uint8_t { hom_a1 = 0b00, missing = 0b01, het = 0b10, hom_a2 = 0b11 };

enum class Sex { unknown = 0, male = 1, female = 2 };

struct VariantRecord {
  std::string chromosome;
  std::string snp_id;
  double genetic_distance = 0.0;  // morgans, carried through unchanged
  std::int64_t position = 0;
  std::string allele1;
  std::string allele2;

  bool operator==(const VariantRecord&) const = default;
};

struct SampleRecord {
  std::string family_id;
  std::string individual_id;
  std::string paternal_id = "0";
  std::string maternal_id = "0";
  Sex sex = Sex::unknown;
  std::optional<std::string> phenotype;  // nullopt is written as -9

  bool operator==(const SampleRecord&) const = default;
};

/// Bit-packed genotype calls, SNP-major, four samples per byte with the
/// first sample in the low bits. Immutable once constructed; the constructor
/// validates every invariant (sizes, unique ids, zeroed padding bits).
class GenotypeMatrix {
 public:
  GenotypeMatrix() = default;
  GenotypeMatrix(std::vector<SampleRecord> samples, std::vector<VariantRecord> variants,
                 std::vector<std::uint8_t> packed);

  // calls are variant-major: calls[v * n_samples + s].
  static GenotypeMatrix from_calls(std::vector<SampleRecord> samples,
                                   std::vector<VariantRecord> variants,
                                   std::span<const Call> calls);

  std::size_t sample_count() const { return samples_.size(); }
  std::size_t variant_count() const { return variants_.size(); }
  std::size_t bytes_per_variant() const { return (samples_.size() + 3) / 4; }

  Call call(std::size_t variant, std::size_t sample) const {
    const auto byte = packed_[variant * bytes_per_variant() + sample / 4];
    return static_cast<Call>((byte >> (2 * (sample % 4))) & 0b11);
  }
  void decode_variant(std::size_t variant, std::span<Call> out) const;

  const std::vector<SampleRecord>& samples() const { return samples_; }
  const std::vector<VariantRecord>& variants() const { return variants_; }
  const std::vector<std::uint8_t>& packed() const { return packed_; }

  bool operator==(const GenotypeMatrix&) const = default;

 private:
  std::vector<SampleRecord> samples_;
  std::vector<VariantRecord> variants_;
  std::vector<std::uint8_t> packed_;
};

struct BedPaths {
  std::filesystem::path bed;
  std::filesystem::path bim;
  std::filesystem::path fam;

  // "<prefix>.bed", "<prefix>.bim", "<prefix>.fam"
  static BedPaths from_prefix(const std::filesystem::path& prefix);
};

GenotypeMatrix read_bed_trio(const BedPaths& paths);
void write_bed_trio(const GenotypeMatrix& matrix, const BedPaths& paths);

enum class FeatureKind : std::uint8_t { snp, apoe };

/// Subjects x features matrix of minor-allele counts:
/// -1 missing, 0 two major alleles, 1 heterozygous, 2 two minor alleles.
/// APOE presence features use -1/0/1.
struct RecodedGenotypes {
  using Values = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic>;

  std::vector<std::string> subject_ids;
  std::vector<std::string> feature_ids;
  std::vector<std::string> chromosomes;
  std::vector<std::string> minor_alleles;
  std::vector<FeatureKind> kinds;
  std::vector<bool> all_missing;
  Values values;  // column-major, one contiguous column per feature

  std::size_t subject_count() const { return subject_ids.size(); }
  std::size_t feature_count() const { return feature_ids.size(); }

  // Throws ValidationError when the parallel arrays disagree or a value is out of range.
  void validate() const;

  RecodedGenotypes select(std::span<const std::size_t> subject_rows,
                          std::span<const std::size_t> feature_cols) const;
};

bool same_contents(const RecodedGenotypes& a, const RecodedGenotypes& b);

RecodedGenotypes recode_minor_allele(const GenotypeMatrix& matrix);

// Recodes using a fixed minor allele per SNP (e.g. the one chosen at
// training time). SNPs absent from the map are skipped.
RecodedGenotypes recode_with_alleles(const GenotypeMatrix& matrix,
                                     const std::map<std::string, std::string>& minor_by_snp);

// Presence coding per subject: -1 missing, 0 absent, 1 present for e2, e3, e4.
using ApoeRecord = std::array<std::int8_t, 3>;
using ApoeTable = std::map<std::string, ApoeRecord>;

inline constexpr std::array<const char*, 3> kApoeFeatureIds{"APOE_e2", "APOE_e3", "APOE_e4"};

ApoeTable read_apoe_csv(const std::filesystem::path& path);
void write_apoe_csv(const ApoeTable& table, const std::filesystem::path& path);

struct ApoeMerge {
  RecodedGenotypes genotypes;
  std::vector<std::string> missing_subjects;
};

ApoeMerge append_apoe(const RecodedGenotypes& recoded, const ApoeTable& apoe);

// Binary persistence of a recoded matrix (pipeline intermediate).
void write_recoded(const RecodedGenotypes& g, const std::filesystem::path& path);
RecodedGenotypes read_recoded(const std::filesystem::path& path);

}  // namespace datscore::plink

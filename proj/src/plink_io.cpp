#include "datscore/plink_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <utility>

#include "datscore/csv.hpp"
#include "datscore/error.hpp"

namespace datscore::plink {
namespace {

constexpr std::uint8_t kMagic0 = 0x6C;
constexpr std::uint8_t kMagic1 = 0x1B;
constexpr std::uint8_t kSnpMajor = 0x01;

std::uint8_t padding_mask(std::size_t n_samples) {
  const auto used = n_samples % 4;
  if (used == 0) return 0xFF;
  return static_cast<std::uint8_t>((1u << (2 * used)) - 1u);
}

std::vector<std::string> whitespace_fields(const std::string& line) {
  std::istringstream ss(line);
  return {std::istream_iterator<std::string>(ss), std::istream_iterator<std::string>()};
}

std::vector<std::vector<std::string>> read_columns(const std::filesystem::path& path,
                                                   std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = whitespace_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != expected)
      throw FormatError(fmt::format("{}:{}: expected {} columns, found {}", path.string(), line_no,
                                    expected, fields.size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

Sex parse_sex(const std::string& s) {
  if (s == "1") return Sex::male;
  if (s == "2") return Sex::female;
  return Sex::unknown;
}

std::vector<VariantRecord> read_bim(const std::filesystem::path& path) {
  std::vector<VariantRecord> out;
  for (auto& f : read_columns(path, 6)) {
    VariantRecord v;
    v.chromosome = std::move(f[0]);
    v.snp_id = std::move(f[1]);
    v.genetic_distance = csv::parse_double(f[2], path.string());
    v.position = csv::parse_int(f[3], path.string());
    v.allele1 = std::move(f[4]);
    v.allele2 = std::move(f[5]);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<SampleRecord> read_fam(const std::filesystem::path& path) {
  std::vector<SampleRecord> out;
  for (auto& f : read_columns(path, 6)) {
    SampleRecord s;
    s.family_id = std::move(f[0]);
    s.individual_id = std::move(f[1]);
    s.paternal_id = std::move(f[2]);
    s.maternal_id = std::move(f[3]);
    s.sex = parse_sex(f[4]);
    if (f[5] != "-9") s.phenotype = std::move(f[5]);
    out.push_back(std::move(s));
  }
  return out;
}

std::int8_t minor_count(Call c, bool minor_is_a2) {
  switch (c) {
    case Call::missing: return -1;
    case Call::het: return 1;
    case Call::hom_a1: return minor_is_a2 ? 0 : 2;
    case Call::hom_a2: return minor_is_a2 ? 2 : 0;
  }
  return -1;
}

RecodedGenotypes empty_recoded(const GenotypeMatrix& m) {
  RecodedGenotypes r;
  r.subject_ids.reserve(m.sample_count());
  for (const auto& s : m.samples()) r.subject_ids.push_back(s.individual_id);
  return r;
}

void push_variant(RecodedGenotypes& r, const VariantRecord& v, const std::string& minor,
                  bool all_missing) {
  r.feature_ids.push_back(v.snp_id);
  r.chromosomes.push_back(v.chromosome);
  r.minor_alleles.push_back(minor);
  r.kinds.push_back(FeatureKind::snp);
  r.all_missing.push_back(all_missing);
}

}  // namespace

GenotypeMatrix::GenotypeMatrix(std::vector<SampleRecord> samples,
                               std::vector<VariantRecord> variants,
                               std::vector<std::uint8_t> packed)
    : samples_(std::move(samples)), variants_(std::move(variants)), packed_(std::move(packed)) {
  if (packed_.size() != variants_.size() * bytes_per_variant())
    throw ValidationError(fmt::format("packed calls hold {} bytes, expected {}", packed_.size(),
                                      variants_.size() * bytes_per_variant()));
  std::set<std::string> snp_ids;
  for (const auto& v : variants_) {
    if (v.allele1.empty() || v.allele2.empty())
      throw ValidationError(fmt::format("variant '{}' has an empty allele", v.snp_id));
    if (!snp_ids.insert(v.snp_id).second)
      throw ValidationError(fmt::format("duplicate SNP id '{}'", v.snp_id));
  }
  std::set<std::pair<std::string, std::string>> sample_ids;
  for (const auto& s : samples_) {
    if (!sample_ids.emplace(s.family_id, s.individual_id).second)
      throw ValidationError(
          fmt::format("duplicate sample id '{} {}'", s.family_id, s.individual_id));
  }
  const auto bpv = bytes_per_variant();
  const auto mask = padding_mask(samples_.size());
  if (bpv > 0 && mask != 0xFF) {
    for (std::size_t v = 0; v < variants_.size(); ++v) {
      if ((packed_[v * bpv + bpv - 1] & static_cast<std::uint8_t>(~mask)) != 0)
        throw ValidationError(fmt::format("variant '{}' has non-zero padding bits",
                                          variants_[v].snp_id));
    }
  }
}

GenotypeMatrix GenotypeMatrix::from_calls(std::vector<SampleRecord> samples,
                                          std::vector<VariantRecord> variants,
                                          std::span<const Call> calls) {
  const auto ns = samples.size();
  const auto nv = variants.size();
  if (calls.size() != ns * nv)
    throw ValidationError(fmt::format("{} calls given for {} x {} matrix", calls.size(), nv, ns));
  const auto bpv = (ns + 3) / 4;
  std::vector<std::uint8_t> packed(nv * bpv, 0);
  for (std::size_t v = 0; v < nv; ++v) {
    for (std::size_t s = 0; s < ns; ++s) {
      const auto code = static_cast<std::uint8_t>(calls[v * ns + s]);
      packed[v * bpv + s / 4] |= static_cast<std::uint8_t>(code << (2 * (s % 4)));
    }
  }
  return GenotypeMatrix(std::move(samples), std::move(variants), std::move(packed));
}

void GenotypeMatrix::decode_variant(std::size_t variant, std::span<Call> out) const {
  const auto bpv = bytes_per_variant();
  const auto* block = packed_.data() + variant * bpv;
  for (std::size_t s = 0; s < samples_.size(); ++s)
    out[s] = static_cast<Call>((block[s / 4] >> (2 * (s % 4))) & 0b11);
}

BedPaths BedPaths::from_prefix(const std::filesystem::path& prefix) {
  auto with = [&](const char* ext) {
    auto p = prefix;
    p += ext;
    return p;
  };
  return {with(".bed"), with(".bim"), with(".fam")};
}

GenotypeMatrix read_bed_trio(const BedPaths& paths) {
  auto variants = read_bim(paths.bim);
  auto samples = read_fam(paths.fam);

  std::ifstream in(paths.bed, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", paths.bed.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 3 || bytes[0] != kMagic0 || bytes[1] != kMagic1)
    throw FormatError(fmt::format("'{}' is not a PLINK .bed file (bad magic)", paths.bed.string()));
  if (bytes[2] != kSnpMajor)
    throw FormatError(fmt::format("'{}': only SNP-major mode (0x01) is supported, found 0x{:02x}",
                                  paths.bed.string(), bytes[2]));

  const auto bpv = (samples.size() + 3) / 4;
  const auto expected = variants.size() * bpv;
  if (bytes.size() - 3 != expected)
    throw TruncationError(fmt::format("'{}': {} data bytes, expected {} ({} SNPs x {} samples)",
                                      paths.bed.string(), bytes.size() - 3, expected,
                                      variants.size(), samples.size()));

  std::vector<std::uint8_t> packed(bytes.begin() + 3, bytes.end());
  const auto mask = padding_mask(samples.size());
  if (bpv > 0 && mask != 0xFF)
    for (std::size_t v = 0; v < variants.size(); ++v) packed[v * bpv + bpv - 1] &= mask;
  return GenotypeMatrix(std::move(samples), std::move(variants), std::move(packed));
}

void write_bed_trio(const GenotypeMatrix& m, const BedPaths& paths) {
  {
    std::ofstream out(paths.bed, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write '{}'", paths.bed.string()));
    const char header[3] = {static_cast<char>(kMagic0), static_cast<char>(kMagic1),
                            static_cast<char>(kSnpMajor)};
    out.write(header, 3);
    out.write(reinterpret_cast<const char*>(m.packed().data()),
              static_cast<std::streamsize>(m.packed().size()));
    if (!out) throw IoError(fmt::format("write failed for '{}'", paths.bed.string()));
  }
  {
    std::ofstream out(paths.bim);
    if (!out) throw IoError(fmt::format("cannot write '{}'", paths.bim.string()));
    for (const auto& v : m.variants())
      out << fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", v.chromosome, v.snp_id,
                         csv::format_double(v.genetic_distance), v.position, v.allele1,
                         v.allele2);
    if (!out) throw IoError(fmt::format("write failed for '{}'", paths.bim.string()));
  }
  {
    std::ofstream out(paths.fam);
    if (!out) throw IoError(fmt::format("cannot write '{}'", paths.fam.string()));
    for (const auto& s : m.samples())
      out << fmt::format("{} {} {} {} {} {}\n", s.family_id, s.individual_id, s.paternal_id,
                         s.maternal_id, static_cast<int>(s.sex), s.phenotype.value_or("-9"));
    if (!out) throw IoError(fmt::format("write failed for '{}'", paths.fam.string()));
  }
}

void RecodedGenotypes::validate() const {
  const auto nf = feature_ids.size();
  if (chromosomes.size() != nf || minor_alleles.size() != nf || kinds.size() != nf ||
      all_missing.size() != nf)
    throw ValidationError("recoded genotype metadata arrays disagree in length");
  if (static_cast<std::size_t>(values.rows()) != subject_ids.size() ||
      static_cast<std::size_t>(values.cols()) != nf)
    throw ValidationError("recoded genotype matrix shape does not match ids");
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const std::int8_t hi = kinds[static_cast<std::size_t>(j)] == FeatureKind::apoe ? 1 : 2;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const auto v = values(i, j);
      if (v < -1 || v > hi)
        throw ValidationError(
            fmt::format("feature '{}' holds out-of-range value {}", feature_ids[j], int(v)));
    }
  }
}

RecodedGenotypes RecodedGenotypes::select(std::span<const std::size_t> rows,
                                          std::span<const std::size_t> cols) const {
  RecodedGenotypes out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (auto r : rows) out.subject_ids.push_back(subject_ids[r]);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto j = cols[c];
    out.feature_ids.push_back(feature_ids[j]);
    out.chromosomes.push_back(chromosomes[j]);
    out.minor_alleles.push_back(minor_alleles[j]);
    out.kinds.push_back(kinds[j]);
    out.all_missing.push_back(all_missing[j]);
    for (std::size_t r = 0; r < rows.size(); ++r)
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          values(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(j));
  }
  return out;
}

bool same_contents(const RecodedGenotypes& a, const RecodedGenotypes& b) {
  return a.subject_ids == b.subject_ids && a.feature_ids == b.feature_ids &&
         a.chromosomes == b.chromosomes && a.minor_alleles == b.minor_alleles &&
         a.kinds == b.kinds && a.all_missing == b.all_missing &&
         a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
         a.values == b.values;
}

RecodedGenotypes recode_minor_allele(const GenotypeMatrix& m) {
  if (m.sample_count() == 0 || m.variant_count() == 0)
    throw ValidationError("cannot recode an empty genotype matrix");
  auto r = empty_recoded(m);
  const auto ns = m.sample_count();
  r.values.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(m.variant_count()));
  std::vector<Call> calls(ns);
  for (std::size_t v = 0; v < m.variant_count(); ++v) {
    m.decode_variant(v, calls);
    std::size_t a1 = 0, a2 = 0;
    for (auto c : calls) {
      if (c == Call::hom_a1) a1 += 2;
      else if (c == Call::hom_a2) a2 += 2;
      else if (c == Call::het) { ++a1; ++a2; }
    }
    // allele2 is minor unless allele1 is strictly rarer (ties go to allele2).
    const bool minor_is_a2 = !(a1 < a2);
    const auto& var = m.variants()[v];
    push_variant(r, var, minor_is_a2 ? var.allele2 : var.allele1, a1 + a2 == 0);
    for (std::size_t s = 0; s < ns; ++s)
      r.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(v)) =
          minor_count(calls[s], minor_is_a2);
  }
  return r;
}

RecodedGenotypes recode_with_alleles(const GenotypeMatrix& m,
                                     const std::map<std::string, std::string>& minor_by_snp) {
  auto r = empty_recoded(m);
  const auto ns = m.sample_count();
  std::vector<std::size_t> picked;
  for (std::size_t v = 0; v < m.variant_count(); ++v)
    if (minor_by_snp.count(m.variants()[v].snp_id)) picked.push_back(v);
  r.values.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(picked.size()));
  std::vector<Call> calls(ns);
  for (std::size_t c = 0; c < picked.size(); ++c) {
    const auto& var = m.variants()[picked[c]];
    const auto& minor = minor_by_snp.at(var.snp_id);
    if (minor != var.allele1 && minor != var.allele2)
      throw ValidationError(fmt::format("SNP '{}': allele '{}' not in {}/{}", var.snp_id, minor,
                                        var.allele1, var.allele2));
    const bool minor_is_a2 = minor == var.allele2;
    m.decode_variant(picked[c], calls);
    bool any = false;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto x = minor_count(calls[s], minor_is_a2);
      any = any || x >= 0;
      r.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = x;
    }
    push_variant(r, var, minor, !any);
  }
  return r;
}

ApoeTable read_apoe_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto id = t.column("individual_id");
  const std::array<std::size_t, 3> cols{t.column("e2"), t.column("e3"), t.column("e4")};
  ApoeTable out;
  for (const auto& row : t.rows) {
    ApoeRecord rec{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto v = csv::parse_int(row[cols[k]], t.source);
      if (v < -1 || v > 1)
        throw ValidationError(fmt::format("{}: APOE value {} for '{}' not in {{-1,0,1}}", t.source,
                                          v, row[id]));
      rec[k] = static_cast<std::int8_t>(v);
    }
    if (!out.emplace(row[id], rec).second)
      throw ValidationError(fmt::format("{}: duplicate individual_id '{}'", t.source, row[id]));
  }
  return out;
}

void write_apoe_csv(const ApoeTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "individual_id,e2,e3,e4\n";
  for (const auto& [id, rec] : table)
    out << fmt::format("{},{},{},{}\n", id, int(rec[0]), int(rec[1]), int(rec[2]));
}

ApoeMerge append_apoe(const RecodedGenotypes& g, const ApoeTable& apoe) {
  ApoeMerge out;
  out.genotypes = g;
  auto& r = out.genotypes;
  const auto nf = g.values.cols();
  r.values.conservativeResize(Eigen::NoChange, nf + 3);
  for (std::size_t k = 0; k < 3; ++k) {
    r.feature_ids.emplace_back(kApoeFeatureIds[k]);
    r.chromosomes.emplace_back("19");
    r.minor_alleles.emplace_back(kApoeFeatureIds[k] + 5);  // "e2", "e3", "e4"
    r.kinds.push_back(FeatureKind::apoe);
  }
  std::array<bool, 3> any{};
  for (std::size_t i = 0; i < g.subject_ids.size(); ++i) {
    const auto it = apoe.find(g.subject_ids[i]);
    ApoeRecord rec{-1, -1, -1};
    if (it == apoe.end()) out.missing_subjects.push_back(g.subject_ids[i]);
    else rec = it->second;
    for (std::size_t k = 0; k < 3; ++k) {
      r.values(static_cast<Eigen::Index>(i), nf + static_cast<Eigen::Index>(k)) = rec[k];
      any[k] = any[k] || rec[k] >= 0;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) r.all_missing.push_back(!any[k]);
  return out;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw TruncationError("recoded genotype file truncated");
  return v;
}
std::string get_str(std::istream& in) {
  const auto n = get_u64(in);
  if (n > (1u << 20)) throw FormatError("recoded genotype file: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw TruncationError("recoded genotype file truncated");
  return s;
}

constexpr char kRecodedMagic[8] = {'D', 'S', 'R', 'E', 'C', '0', '0', '1'};

}  // namespace

void write_recoded(const RecodedGenotypes& g, const std::filesystem::path& path) {
  g.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(kRecodedMagic, sizeof kRecodedMagic);
  put_u64(out, g.subject_ids.size());
  put_u64(out, g.feature_ids.size());
  for (const auto& s : g.subject_ids) put_str(out, s);
  for (std::size_t j = 0; j < g.feature_ids.size(); ++j) {
    put_str(out, g.feature_ids[j]);
    put_str(out, g.chromosomes[j]);
    put_str(out, g.minor_alleles[j]);
    const char flags[2] = {static_cast<char>(g.kinds[j]), static_cast<char>(g.all_missing[j])};
    out.write(flags, 2);
  }
  out.write(reinterpret_cast<const char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size()));
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

RecodedGenotypes read_recoded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kRecodedMagic, 8) != 0)
    throw FormatError(fmt::format("'{}' is not a recoded genotype file", path.string()));
  RecodedGenotypes g;
  const auto ns = get_u64(in);
  const auto nf = get_u64(in);
  for (std::uint64_t i = 0; i < ns; ++i) g.subject_ids.push_back(get_str(in));
  for (std::uint64_t j = 0; j < nf; ++j) {
    g.feature_ids.push_back(get_str(in));
    g.chromosomes.push_back(get_str(in));
    g.minor_alleles.push_back(get_str(in));
    char flags[2];
    in.read(flags, 2);
    g.kinds.push_back(static_cast<FeatureKind>(flags[0]));
    g.all_missing.push_back(flags[1] != 0);
  }
  g.values.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(nf));
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size()));
  if (!in) throw TruncationError(fmt::format("'{}' truncated", path.string()));
  g.validate();
  return g;
}

}  // namespace datscore::plink

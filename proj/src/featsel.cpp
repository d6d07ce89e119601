#include "datscore/featsel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>

#include "datscore/digest.hpp"
#include "datscore/error.hpp"

namespace datscore::featsel {

const char* to_string(Modality m) {
  switch (m) {
    case Modality::genetic: return "genetic";
    case Modality::mri: return "mri";
    case Modality::combined: return "combined";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "genetic") return Modality::genetic;
  if (s == "mri") return Modality::mri;
  if (s == "combined") return Modality::combined;
  throw ValidationError(fmt::format("unknown modality '{}'", s));
}

std::string snp_feature_id(std::string_view snp_id) { return fmt::format("snp:{}", snp_id); }
std::string roi_feature_id(std::string_view roi_name) { return fmt::format("roi:{}", roi_name); }

Modality modality_of(std::string_view id) {
  if (id.starts_with("snp:")) return Modality::genetic;
  if (id.starts_with("roi:")) return Modality::mri;
  throw ValidationError(fmt::format("feature id '{}' has no snp: or roi: prefix", id));
}

std::string_view strip_namespace(std::string_view id) {
  modality_of(id);
  return id.substr(4);
}

namespace {

std::vector<std::string> sorted_unique(std::span<const std::string> ids, const char* what) {
  std::vector<std::string> v(ids.begin(), ids.end());
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end())
    throw ValidationError(fmt::format("duplicate subject id in the {} class", what));
  return v;
}

// Draws m of the sorted ids; returns (chosen, rest), both sorted.
std::pair<std::vector<std::string>, std::vector<std::string>> draw(const std::vector<std::string>& ids,
                                                                   std::size_t m,
                                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> idx(ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<long>(m));
  std::sort(idx.begin() + static_cast<long>(m), idx.end());
  std::vector<std::string> chosen, rest;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < m ? chosen : rest).push_back(ids[idx[i]]);
  return {chosen, rest};
}

}  // namespace

SubBagPlan make_subbag_plan(std::span<const std::string> negative_ids,
                            std::span<const std::string> positive_ids, std::size_t f, double ratio,
                            std::uint64_t seed) {
  if (negative_ids.empty() || positive_ids.empty())
    throw ValidationError("sub-bagging needs subjects in both classes");
  if (f == 0) throw ValidationError("sub-bagging needs at least one subset");
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw ValidationError(fmt::format("sampling ratio {} is outside (0, 1]", ratio));
  const auto neg = sorted_unique(negative_ids, "negative");
  const auto pos = sorted_unique(positive_ids, "positive");
  const double m = std::round(ratio * static_cast<double>(std::min(neg.size(), pos.size())));
  if (m < 1.0)
    throw ValidationError(fmt::format("ratio {} leaves no subjects per class (smaller class has {})",
                                      ratio, std::min(neg.size(), pos.size())));

  SubBagPlan plan;
  plan.f_subsets = f;
  plan.sampling_ratio = ratio;
  plan.seed = seed;
  plan.per_class = static_cast<std::size_t>(m);
  for (std::size_t s = 0; s < f; ++s) {
    std::mt19937_64 rng(derive_seed(seed, "subbag", s));
    SubBag bag;
    std::tie(bag.negative, bag.oob_negative) = draw(neg, plan.per_class, rng);
    std::tie(bag.positive, bag.oob_positive) = draw(pos, plan.per_class, rng);
    plan.subsets.push_back(std::move(bag));
  }
  plan.oob_empty = std::all_of(plan.subsets.begin(), plan.subsets.end(), [](const SubBag& b) {
    return b.oob_negative.empty() && b.oob_positive.empty();
  });
  return plan;
}

std::vector<FeatureScore> score_genetic(const plink::RecodedGenotypes& g,
                                        std::span<const std::size_t> negative_rows,
                                        std::span<const std::size_t> positive_rows) {
  std::vector<FeatureScore> out;
  out.reserve(g.feature_count());
  for (std::size_t j = 0; j < g.feature_count(); ++j) {
    stats::GenotypeTable table{};
    const auto col = g.values.col(static_cast<Eigen::Index>(j));
    for (auto r : negative_rows) {
      const auto v = col(static_cast<Eigen::Index>(r));
      if (v >= 0) ++table[0][static_cast<std::size_t>(v)];
    }
    for (auto r : positive_rows) {
      const auto v = col(static_cast<Eigen::Index>(r));
      if (v >= 0) ++table[1][static_cast<std::size_t>(v)];
    }
    FeatureScore s;
    s.feature_id = snp_feature_id(g.feature_ids[j]);
    const bool empty0 = table[0][0] + table[0][1] + table[0][2] == 0;
    const bool empty1 = table[1][0] + table[1][1] + table[1][2] == 0;
    if (empty0 || empty1) {
      s.testable = false;
    } else {
      const auto r = stats::fisher_exact_test(table);
      s.p_value = r.p_value;
      s.effect_size = r.cramers_v;
      s.collapsed = r.collapsed;
      // Signed association: positive when the minor allele is enriched in class +1.
      const double m0 = static_cast<double>(table[0][1] + 2 * table[0][2]) /
                        static_cast<double>(table[0][0] + table[0][1] + table[0][2]);
      const double m1 = static_cast<double>(table[1][1] + 2 * table[1][2]) /
                        static_cast<double>(table[1][0] + table[1][1] + table[1][2]);
      s.statistic = m1 - m0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FeatureScore> score_continuous(const Eigen::MatrixXd& values,
                                           std::span<const std::string> feature_ids,
                                           std::span<const std::size_t> negative_rows,
                                           std::span<const std::size_t> positive_rows) {
  if (static_cast<std::size_t>(values.cols()) != feature_ids.size())
    throw ValidationError("feature ids do not match the value columns");
  std::vector<double> x(positive_rows.size()), y(negative_rows.size());
  std::vector<FeatureScore> out;
  out.reserve(feature_ids.size());
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    const auto col = values.col(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < positive_rows.size(); ++i) x[i] = col(static_cast<Eigen::Index>(positive_rows[i]));
    for (std::size_t i = 0; i < negative_rows.size(); ++i) y[i] = col(static_cast<Eigen::Index>(negative_rows[i]));
    const auto r = stats::welch_t_test(x, y);
    FeatureScore s;
    s.feature_id = feature_ids[j];
    s.statistic = r.t;
    s.p_value = r.p_value;
    s.effect_size = r.cohens_d;
    out.push_back(std::move(s));
  }
  return out;
}

bool ranks_before(const FeatureScore& a, const FeatureScore& b) {
  if (a.effect_size != b.effect_size) return a.effect_size > b.effect_size;
  if (a.p_value != b.p_value) return a.p_value < b.p_value;
  return a.feature_id < b.feature_id;
}

std::vector<std::string> select_per_subset(std::span<const FeatureScore> scores, std::size_t k) {
  if (k > scores.size())
    throw ValidationError(fmt::format("cannot select {} of {} scored features", k, scores.size()));
  for (const auto& s : scores)
    if (std::isnan(s.effect_size) || std::isnan(s.p_value))
      throw NumericalError(fmt::format("feature '{}' has a NaN score", s.feature_id));
  // Heap ordered so that its front is the weakest kept feature.
  std::vector<const FeatureScore*> heap;
  heap.reserve(k + 1);
  auto cmp = [](const FeatureScore* a, const FeatureScore* b) { return ranks_before(*a, *b); };
  for (const auto& s : scores) {
    if (k == 0) break;
    if (heap.size() < k) {
      heap.push_back(&s);
      std::push_heap(heap.begin(), heap.end(), cmp);
    } else if (ranks_before(s, *heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.back() = &s;
      std::push_heap(heap.begin(), heap.end(), cmp);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), cmp);
  std::vector<std::string> ids;
  ids.reserve(heap.size());
  for (const auto* s : heap) ids.push_back(s->feature_id);
  return ids;
}

std::vector<std::string> FeatureSet::ids() const {
  std::vector<std::string> v;
  for (const auto& f : features) v.push_back(f.feature_id);
  return v;
}

std::vector<std::string> FeatureSet::ids_of(Modality source) const {
  std::vector<std::string> v;
  for (const auto& f : features)
    if (f.source == source) v.push_back(f.feature_id);
  return v;
}

FeatureSet aggregate_frequency(std::span<const std::vector<std::string>> per_subset, std::size_t k,
                               std::uint64_t seed, Modality modality) {
  if (per_subset.empty()) throw ValidationError("frequency aggregation needs at least one subset");
  std::map<std::string, std::size_t> counts;
  for (const auto& sel : per_subset) {
    std::set<std::string> seen(sel.begin(), sel.end());
    for (const auto& id : seen) ++counts[id];
  }
  if (counts.size() < k)
    throw ValidationError(
        fmt::format("only {} distinct features were selected, fewer than k = {}", counts.size(), k));

  const double F = static_cast<double>(per_subset.size());
  FeatureSet fs;
  fs.modality = modality;
  fs.k = k;
  for (const auto& [id, c] : counts) fs.candidate_frequency[id] = static_cast<double>(c) / F;

  // Group ids by count, highest first; std::map keeps each group lexicographic.
  std::map<std::size_t, std::vector<std::string>, std::greater<>> by_count;
  for (const auto& [id, c] : counts) by_count[c].push_back(id);
  auto add = [&](const std::string& id, std::size_t c) {
    fs.features.push_back({id, static_cast<double>(c) / F, modality_of(id)});
  };
  for (auto& [c, ids] : by_count) {
    const std::size_t room = k - fs.features.size();
    if (room == 0) break;
    if (ids.size() <= room) {
      for (const auto& id : ids) add(id, c);
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, "frequency_tie"));
    std::vector<std::string> pool = ids;
    for (std::size_t i = 0; i < room; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<long>(room));
    for (std::size_t i = 0; i < room; ++i) add(pool[i], c);
    fs.warnings.push_back(fmt::format("{} of {} features tied at frequency {} chosen at random", room,
                                      ids.size(), static_cast<double>(c) / F));
  }
  if (modality != Modality::combined)
    for (const auto& f : fs.features)
      if (f.source != modality)
        throw ValidationError(fmt::format("feature '{}' does not belong to the {} modality",
                                          f.feature_id, to_string(modality)));
  return fs;
}

FeatureSet combine_modalities(const FeatureSet& genetic, const FeatureSet& mri) {
  FeatureSet out;
  out.modality = Modality::combined;
  std::set<std::string> seen;
  for (const auto* part : {&genetic, &mri}) {
    for (const auto& f : part->features) {
      if (!seen.insert(f.feature_id).second) {
        out.warnings.push_back(fmt::format("feature '{}' appears in both sets", f.feature_id));
        continue;
      }
      out.features.push_back(f);
    }
    for (const auto& [id, freq] : part->candidate_frequency) out.candidate_frequency.emplace(id, freq);
    out.warnings.insert(out.warnings.end(), part->warnings.begin(), part->warnings.end());
  }
  out.k = out.features.size();
  return out;
}

FeatureSet fixed_feature_set(std::span<const std::string> ids, Modality modality) {
  FeatureSet fs;
  fs.modality = modality;
  std::set<std::string> seen;
  for (const auto& id : ids) {
    const auto source = modality_of(id);
    if (modality != Modality::combined && source != modality)
      throw ValidationError(fmt::format("fixed feature '{}' is not a {} feature", id, to_string(modality)));
    if (!seen.insert(id).second) throw ValidationError(fmt::format("fixed feature '{}' listed twice", id));
    fs.features.push_back({id, 1.0, source});
    fs.candidate_frequency[id] = 1.0;
  }
  fs.k = fs.features.size();
  return fs;
}

Eigen::MatrixXd genetic_design(const plink::RecodedGenotypes& g, std::span<const std::size_t> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(g.feature_count());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto v = g.values(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]), j);
      x(i, j) = v;
      if (v >= 0) {
        sum += v;
        ++seen;
      }
    }
    const double mean = seen > 0 ? sum / static_cast<double>(seen) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (x(i, j) < 0.0) x(i, j) = mean;
  }
  return x;
}

void standardize_columns(Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    col.array() -= col.mean();
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd > 1e-12 * (1.0 + col.cwiseAbs().maxCoeff())) col /= sd;
    else col.setZero();
  }
}

}  // namespace datscore::featsel

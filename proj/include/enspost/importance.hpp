#pragma once

// Ensemble-aware permutation feature importance: shuffling operators on one
// predictor's ensembles, relative importance delta0, conditional restoration
// ratios chi, and Spearman preservation matrices of ensemble statistics.

#include "enspost/train.hpp"

#include <array>
#include <optional>

namespace enspost {

enum class SummaryKind { mean, std, min, max, iqr, range, skewness, kurtosis };

inline constexpr std::array<SummaryKind, 8> kSummaryKinds{SummaryKind::mean, SummaryKind::std,   SummaryKind::min,
                                                          SummaryKind::max,  SummaryKind::iqr,   SummaryKind::range,
                                                          SummaryKind::skewness, SummaryKind::kurtosis};

inline const char* to_string(SummaryKind k) {
  switch (k) {
    case SummaryKind::mean: return "mean";
    case SummaryKind::std: return "std";
    case SummaryKind::min: return "min";
    case SummaryKind::max: return "max";
    case SummaryKind::iqr: return "iqr";
    case SummaryKind::range: return "range";
    case SummaryKind::skewness: return "skewness";
    case SummaryKind::kurtosis: return "kurtosis";
  }
  return "?";
}

inline SummaryKind parse_summary_kind(const std::string& s) {
  for (SummaryKind k : kSummaryKinds) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown summary statistic '" + s + "'");
}

/// Type-7 quantile of ascending values.
inline double sorted_quantile7(std::span<const double> x, double p) {
  const double h = static_cast<double>(x.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

/// Moments use the n denominator except std (n - 1). Constant ensembles give
/// zero spread, skewness and kurtosis.
inline double summary_statistic(std::span<const double> values, SummaryKind kind) {
  if (values.size() < 2) throw DomainError("summary_statistic: need at least 2 members");
  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  const bool constant = x.front() == x.back();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  if (constant) mean = x.front();
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  switch (kind) {
    case SummaryKind::mean: return mean;
    case SummaryKind::std: return constant ? 0.0 : std::sqrt(m2 * n / (n - 1.0));
    case SummaryKind::min: return x.front();
    case SummaryKind::max: return x.back();
    case SummaryKind::iqr: return sorted_quantile7(x, 0.75) - sorted_quantile7(x, 0.25);
    case SummaryKind::range: return x.back() - x.front();
    case SummaryKind::skewness: return constant ? 0.0 : m3 / std::pow(m2, 1.5);
    case SummaryKind::kurtosis: return constant ? 0.0 : m4 / (m2 * m2) - 3.0;
  }
  throw ConfigError("unknown summary statistic");
}

inline std::vector<double> predictor_column(const EnsembleSample& s, std::size_t predictor) {
  const auto c = s.ens.col(static_cast<Index>(predictor));
  return {c.begin(), c.end()};
}

// ---------------------------------------------------------------------------
// Perturbation operators

enum class PerturbationKind { fully_random, rank_aware, conditional };

inline const char* to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::fully_random: return "fully_random";
    case PerturbationKind::rank_aware: return "rank_aware";
    case PerturbationKind::conditional: return "conditional";
  }
  return "?";
}

inline PerturbationKind parse_perturbation_kind(const std::string& s) {
  for (auto k : {PerturbationKind::fully_random, PerturbationKind::rank_aware, PerturbationKind::conditional}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown perturbation kind '" + s + "'");
}

struct PerturbationSpec {
  std::size_t predictor = 0;
  PerturbationKind kind = PerturbationKind::rank_aware;
  SummaryKind statistic = SummaryKind::mean;  // conditional only
  std::size_t bins = 100;                     // conditional only
  std::uint64_t seed = 0;

  void validate(const Dataset& d) const {
    if (predictor >= d.predictors()) throw ConfigError("perturbation: predictor index out of range");
    if (kind == PerturbationKind::conditional && bins < 2) throw ConfigError("perturbation: bins must be at least 2");
    if (d.size() < 2) throw DomainError("perturbation: need at least 2 samples");
  }
};

/// Within-ensemble ranks 0..M-1, ties broken by member index.
inline std::vector<std::size_t> member_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::size_t> rank(v.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

namespace detail {

inline void check_donors(const Dataset& d, std::size_t predictor, std::span<const std::size_t> donors) {
  if (predictor >= d.predictors()) throw ConfigError("perturbation: predictor index out of range");
  if (donors.size() != d.size()) throw ContractError("perturbation: donor list must cover every sample");
  std::vector<char> seen(d.size(), 0);
  for (std::size_t j : donors) {
    if (j >= d.size() || seen[j]) throw ContractError("perturbation: donors must form a permutation");
    seen[j] = 1;
  }
}

}  // namespace detail

/// Sample t receives the predictor column of sample donors[t], reordered so
/// that its ranks match sample t's original member ranks.
inline Dataset transplant_rank_aware(const Dataset& d, std::size_t predictor, std::span<const std::size_t> donors) {
  detail::check_donors(d, predictor, donors);
  Dataset out = d;
  const auto col = static_cast<Index>(predictor);
  for (std::size_t t = 0; t < d.size(); ++t) {
    std::vector<double> donor = predictor_column(d.samples[donors[t]], predictor);
    std::sort(donor.begin(), donor.end());
    const auto ranks = member_ranks(predictor_column(d.samples[t], predictor));
    for (std::size_t m = 0; m < ranks.size(); ++m) out.samples[t].ens(static_cast<Index>(m), col) = donor[ranks[m]];
  }
  return out;
}

/// Sample t receives the predictor column of sample donors[t] with member
/// positions shuffled uniformly.
inline Dataset transplant_shuffled(const Dataset& d, std::size_t predictor, std::span<const std::size_t> donors,
                                   Rng& rng) {
  detail::check_donors(d, predictor, donors);
  Dataset out = d;
  const auto col = static_cast<Index>(predictor);
  for (std::size_t t = 0; t < d.size(); ++t) {
    const auto& src = d.samples[donors[t]].ens;
    const auto perm = random_permutation(static_cast<std::size_t>(src.rows()), rng);
    for (std::size_t m = 0; m < perm.size(); ++m) {
      out.samples[t].ens(static_cast<Index>(m), col) = src(static_cast<Index>(perm[m]), col);
    }
  }
  return out;
}

struct Binning {
  std::vector<std::size_t> bin;  // per sample
  std::size_t bins_used = 0;
  std::size_t unique_values = 0;
  bool collapsed = false;  // fewer bins than requested
};

/// Samples ranked by the unique values of `stat` (1..U), ranks cut into runs
/// of ceil(U/B). Equal statistic values share a bin.
inline Binning bin_by_statistic(std::span<const double> stat, std::size_t bins) {
  if (bins < 1) throw ConfigError("binning: bins must be positive");
  std::vector<double> uniq(stat.begin(), stat.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  Binning b;
  b.unique_values = uniq.size();
  const std::size_t width = (uniq.size() + bins - 1) / bins;
  b.bins_used = (uniq.size() + width - 1) / width;
  b.collapsed = b.bins_used < bins;
  b.bin.reserve(stat.size());
  for (double s : stat) {
    const auto rank = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
    b.bin.push_back(rank / width);
  }
  return b;
}

struct PerturbResult {
  Dataset data;
  Binning binning;  // conditional only
};

inline PerturbResult perturb_detailed(const Dataset& d, const PerturbationSpec& spec) {
  spec.validate(d);
  Rng rng = make_rng(spec.seed, std::string("perturb.") + to_string(spec.kind), spec.predictor);
  PerturbResult out;
  switch (spec.kind) {
    case PerturbationKind::fully_random: {
      const auto donors = random_permutation(d.size(), rng);
      out.data = transplant_shuffled(d, spec.predictor, donors, rng);
      break;
    }
    case PerturbationKind::rank_aware: {
      const auto donors = random_permutation(d.size(), rng);
      out.data = transplant_rank_aware(d, spec.predictor, donors);
      break;
    }
    case PerturbationKind::conditional: {
      std::vector<double> stat;
      stat.reserve(d.size());
      for (const auto& s : d.samples) stat.push_back(summary_statistic(predictor_column(s, spec.predictor), spec.statistic));
      out.binning = bin_by_statistic(stat, spec.bins);
      std::vector<std::vector<std::size_t>> members(out.binning.bins_used);
      for (std::size_t t = 0; t < d.size(); ++t) members[out.binning.bin[t]].push_back(t);
      std::vector<std::size_t> donors(d.size());
      for (const auto& group : members) {
        const auto p = random_permutation(group.size(), rng);
        for (std::size_t j = 0; j < group.size(); ++j) donors[group[j]] = group[p[j]];
      }
      out.data = transplant_rank_aware(d, spec.predictor, donors);
      break;
    }
  }
  return out;
}

inline Dataset perturb(const Dataset& d, const PerturbationSpec& spec) { return perturb_detailed(d, spec).data; }

// ---------------------------------------------------------------------------
// Rank correlation and preservation

/// Average (mid) ranks, 1-based.
inline std::vector<double> mid_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation of mid-ranks; empty when either side has no rank
/// variance.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 2) throw DomainError("spearman: need at least 2 values");
  const auto rx = mid_ranks(x), ry = mid_ranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::vector<double> statistic_over_samples(const Dataset& d, std::size_t predictor, SummaryKind k) {
  std::vector<double> out;
  out.reserve(d.size());
  for (const auto& s : d.samples) out.push_back(summary_statistic(predictor_column(s, predictor), k));
  return out;
}

struct PreservationMatrix {
  // entry[row][col]: conditioning statistic row, measured statistic col.
  std::array<std::array<std::optional<double>, 8>, 8> entry{};
  std::array<std::size_t, 8> bins_used{};
  std::array<bool, 8> collapsed{};
};

inline PreservationMatrix preservation_matrix(const Dataset& d, std::size_t predictor, std::size_t bins,
                                              std::uint64_t seed) {
  if (d.size() < 10) throw DomainError("preservation_matrix: need at least 10 samples");
  std::array<std::vector<double>, 8> original;
  for (std::size_t c = 0; c < 8; ++c) original[c] = statistic_over_samples(d, predictor, kSummaryKinds[c]);
  PreservationMatrix pm;
  for (std::size_t r = 0; r < 8; ++r) {
    const PerturbationSpec spec{predictor, PerturbationKind::conditional, kSummaryKinds[r], bins,
                                derive_seed(seed, "preservation", r)};
    const PerturbResult res = perturb_detailed(d, spec);
    pm.bins_used[r] = res.binning.bins_used;
    pm.collapsed[r] = res.binning.collapsed;
    for (std::size_t c = 0; c < 8; ++c) {
      pm.entry[r][c] = spearman(original[c], statistic_over_samples(res.data, predictor, kSummaryKinds[c]));
    }
  }
  return pm;
}

// ---------------------------------------------------------------------------
// Scores

inline double test_crps(const Model& m, const Dataset& d) { return mean_crps(m, m.prepare(d)); }

/// (S_perturbed - S) / S; NaN when S is zero.
inline double relative_importance(double base, double perturbed) {
  if (base == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (perturbed - base) / base;
}

inline double delta0(const Model& m, const Dataset& test, const PerturbationSpec& spec) {
  return relative_importance(test_crps(m, test), test_crps(m, perturb(test, spec)));
}

/// Score-deficit ratio (S_num - S) / (S_den - S).
inline double importance_ratio(double base, double numerator, double denominator) {
  return (numerator - base) / (denominator - base);
}

struct ChiResult {
  double value = 0.0;  // fraction of the deficit restored: (S_R - S_C) / (S_R - S)
  double base = 0.0;
  double reference = 0.0;    // S_R, rank-aware shuffle
  double conditional = 0.0;  // S_C, conditional shuffle
  bool reliable = true;      // S_R - S >= 1e-3 S
  std::size_t bins_used = 0;
  bool collapsed = false;
};

inline ChiResult chi_from_scores(double base, double reference, double conditional) {
  ChiResult r;
  r.base = base;
  r.reference = reference;
  r.conditional = conditional;
  r.value = 1.0 - importance_ratio(base, conditional, reference);
  r.reliable = reference - base >= 1e-3 * base;
  return r;
}

inline PerturbationSpec chi_reference_spec(std::size_t predictor, std::uint64_t seed) {
  return {predictor, PerturbationKind::rank_aware, SummaryKind::mean, 2, derive_seed(seed, "chi.reference")};
}

inline PerturbationSpec chi_conditional_spec(std::size_t predictor, SummaryKind s, std::size_t bins,
                                             std::uint64_t seed) {
  return {predictor, PerturbationKind::conditional, s, bins, derive_seed(seed, "chi.conditional")};
}

inline ChiResult chi(const Model& m, const Dataset& test, std::size_t predictor, SummaryKind s, std::size_t bins,
                     std::uint64_t seed) {
  const double base = test_crps(m, test);
  const double ref = test_crps(m, perturb(test, chi_reference_spec(predictor, seed)));
  const PerturbResult cond = perturb_detailed(test, chi_conditional_spec(predictor, s, bins, seed));
  ChiResult r = chi_from_scores(base, ref, test_crps(m, cond.data));
  r.bins_used = cond.binning.bins_used;
  r.collapsed = cond.binning.collapsed;
  return r;
}

/// Zeroes every first-layer weight that reads `predictor`, so the model
/// ignores it.
inline void zero_predictor_inputs(Model& m, std::size_t predictor) {
  if (predictor >= m.predictors()) throw ConfigError("zero_predictor_inputs: predictor index out of range");
  switch (m.config.architecture) {
    case Architecture::emos:
      if (predictor == m.primary) {
        auto c = m.params.view(m.emos_coef);
        for (int col : {1, 2, 4, 5}) c.col(col).setZero();
      }
      break;
    case Architecture::drn:
    case Architecture::bqn: {
      auto w = m.params.view(m.summary_mlp.layers.front().first);
      if (predictor == m.primary) {
        w.row(0).setZero();
        w.row(1).setZero();
      } else {
        w.row(static_cast<Index>(2 + (predictor < m.primary ? predictor : predictor - 1))).setZero();
      }
      break;
    }
    case Architecture::ed_drn:
    case Architecture::ed_bqn:
      m.params.view(m.encoder.layers.front().first).row(static_cast<Index>(predictor)).setZero();
      break;
    case Architecture::st_drn:
    case Architecture::st_bqn:
      m.params.view(m.input_proj.layers.front().first).row(static_cast<Index>(predictor)).setZero();
      break;
  }
}

// ---------------------------------------------------------------------------
// Pool-level analysis

struct ImportanceConfig {
  std::vector<std::string> predictors;  // empty: all
  std::vector<SummaryKind> statistics{kSummaryKinds.begin(), kSummaryKinds.end()};
  std::size_t bins = 100;
  PerturbationKind delta0_operator = PerturbationKind::fully_random;
  bool preservation = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (bins < 2) throw ConfigError("importance.bins must be at least 2");
    if (delta0_operator == PerturbationKind::conditional) {
      throw ConfigError("importance.delta0_operator must be fully_random or rank_aware");
    }
    if (statistics.empty()) throw ConfigError("importance.statistics must not be empty");
  }
};

inline void to_json(Json& j, const ImportanceConfig& c) {
  std::vector<std::string> stats;
  for (SummaryKind k : c.statistics) stats.emplace_back(to_string(k));
  j = Json{{"predictors", c.predictors}, {"statistics", stats},
           {"bins", c.bins},             {"delta0_operator", to_string(c.delta0_operator)},
           {"preservation", c.preservation}, {"seed", c.seed}};
}

inline void from_json(const Json& j, ImportanceConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "predictors") c.predictors = it->get<std::vector<std::string>>();
    else if (k == "statistics") {
      c.statistics.clear();
      for (const auto& s : *it) c.statistics.push_back(parse_summary_kind(s.get<std::string>()));
    } else if (k == "bins") c.bins = it->get<std::size_t>();
    else if (k == "delta0_operator") c.delta0_operator = parse_perturbation_kind(it->get<std::string>());
    else if (k == "preservation") c.preservation = it->get<bool>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else throw ConfigError("importance." + k + ": unknown field");
  }
}

/// Mean and five-number summary over model runs.
struct BoxStats {
  double mean = 0.0, min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
  std::vector<double> values;
};

inline BoxStats box_stats(std::vector<double> v) {
  BoxStats b;
  b.values = v;
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  for (double x : v) b.mean += x;
  b.mean /= static_cast<double>(v.size());
  b.min = v.front();
  b.max = v.back();
  b.q25 = sorted_quantile7(v, 0.25);
  b.median = sorted_quantile7(v, 0.5);
  b.q75 = sorted_quantile7(v, 0.75);
  return b;
}

inline void to_json(Json& j, const BoxStats& b) {
  j = Json{{"mean", b.mean}, {"min", b.min},       {"q25", b.q25},
           {"median", b.median}, {"q75", b.q75}, {"max", b.max}, {"values", b.values}};
}

struct ChiSummary {
  BoxStats value;
  std::size_t reliable_runs = 0;
  std::size_t bins_used = 0;
  bool collapsed = false;
};

struct ImportanceReport {
  ImportanceConfig config;
  std::vector<std::string> predictors;        // analysed for chi and preservation
  std::vector<std::string> delta0_predictors;  // every ensemble predictor
  std::vector<double> base_crps;  // per model run
  std::vector<BoxStats> delta0;   // per entry of delta0_predictors
  std::vector<std::vector<ChiSummary>> chi;  // [predictor][statistic]
  std::vector<PreservationMatrix> preservation;  // per predictor, if enabled
};

/// Scores every model of `models` on the unperturbed and perturbed test sets.
/// Perturbed datasets are shared across models; scoring runs on `workers`
/// threads with results in fixed slots.
inline ImportanceReport run_importance(const std::vector<const Model*>& models, const Dataset& test,
                                       const ImportanceConfig& cfg, int workers = 1) {
  cfg.validate();
  if (models.empty()) throw DomainError("importance: no models");
  if (test.size() < 10) throw DomainError("importance: need at least 10 test samples");
  for (const Model* m : models) m->check_dataset(test);
  ImportanceReport rep;
  rep.config = cfg;
  std::vector<std::size_t> pidx;
  if (cfg.predictors.empty()) {
    for (std::size_t i = 0; i < test.predictors(); ++i) pidx.push_back(i);
  } else {
    for (const auto& name : cfg.predictors) pidx.push_back(test.predictor_index(name));
  }
  for (std::size_t i : pidx) rep.predictors.push_back(test.predictor_names[i]);

  const std::size_t A = test.predictors(), P = pidx.size(), S = cfg.statistics.size(), N = models.size();
  for (std::size_t i = 0; i < A; ++i) rep.delta0_predictors.push_back(test.predictor_names[i]);
  // Perturbed test sets: delta0 operator for every predictor, then per
  // analysed predictor [reference, conditional x S].
  const std::size_t per = 1 + S;
  std::vector<Dataset> sets(A + P * per);
  std::vector<Binning> binnings(sets.size());
  parallel_for(sets.size(), workers, [&](std::size_t task) {
    if (task < A) {
      sets[task] = perturb(test, {task, cfg.delta0_operator, SummaryKind::mean, 2, derive_seed(cfg.seed, "delta0")});
      return;
    }
    const std::size_t p = (task - A) / per, slot = (task - A) % per, i = pidx[p];
    if (slot == 0) {
      sets[task] = perturb(test, chi_reference_spec(i, cfg.seed));
    } else {
      auto r = perturb_detailed(test, chi_conditional_spec(i, cfg.statistics[slot - 1], cfg.bins, cfg.seed));
      sets[task] = std::move(r.data);
      binnings[task] = r.binning;
    }
  });

  rep.base_crps.assign(N, 0.0);
  const std::size_t L = sets.size();
  std::vector<double> scores(N * L);
  parallel_for(N * (L + 1), workers, [&](std::size_t task) {
    const std::size_t m = task / (L + 1), s = task % (L + 1);
    if (s == L) {
      rep.base_crps[m] = test_crps(*models[m], test);
    } else {
      scores[m * L + s] = test_crps(*models[m], sets[s]);
    }
  });

  for (std::size_t a = 0; a < A; ++a) {
    std::vector<double> d0;
    for (std::size_t m = 0; m < N; ++m) d0.push_back(relative_importance(rep.base_crps[m], scores[m * L + a]));
    rep.delta0.push_back(box_stats(d0));
  }
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t base = A + p * per;
    std::vector<ChiSummary> row;
    for (std::size_t s = 0; s < S; ++s) {
      ChiSummary cs;
      std::vector<double> v;
      for (std::size_t m = 0; m < N; ++m) {
        const ChiResult r = chi_from_scores(rep.base_crps[m], scores[m * L + base], scores[m * L + base + 1 + s]);
        v.push_back(r.value);
        cs.reliable_runs += r.reliable ? 1 : 0;
      }
      cs.value = box_stats(v);
      cs.bins_used = binnings[base + 1 + s].bins_used;
      cs.collapsed = binnings[base + 1 + s].collapsed;
      row.push_back(cs);
    }
    rep.chi.push_back(std::move(row));
  }

  if (cfg.preservation) {
    rep.preservation.resize(P);
    parallel_for(P, workers, [&](std::size_t p) {
      rep.preservation[p] = preservation_matrix(test, pidx[p], cfg.bins, derive_seed(cfg.seed, "preservation.matrix"));
    });
  }
  return rep;
}

inline Json preservation_json(const PreservationMatrix& pm) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < 8; ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < 8; ++c) row.push_back(pm.entry[r][c] ? Json(*pm.entry[r][c]) : Json(nullptr));
    rows.push_back(row);
  }
  std::vector<std::string> names;
  for (SummaryKind k : kSummaryKinds) names.emplace_back(to_string(k));
  Json collapsed = Json::array();
  for (std::size_t r = 0; r < 8; ++r) {
    if (pm.collapsed[r]) collapsed.push_back(names[r]);
  }
  return Json{{"statistics", names},
              {"matrix", rows},
              {"bins_used", std::vector<std::size_t>(pm.bins_used.begin(), pm.bins_used.end())},
              {"collapsed", collapsed}};
}

inline void to_json(Json& j, const ImportanceReport& r) {
  Json d0 = Json::object(), chi = Json::object(), pres = Json::object();
  for (std::size_t a = 0; a < r.delta0_predictors.size(); ++a) d0[r.delta0_predictors[a]] = r.delta0[a];
  for (std::size_t p = 0; p < r.predictors.size(); ++p) {
    Json row = Json::object();
    for (std::size_t s = 0; s < r.config.statistics.size(); ++s) {
      const ChiSummary& c = r.chi[p][s];
      Json e = c.value;
      e["reliable_runs"] = c.reliable_runs;
      e["bins_used"] = c.bins_used;
      e["collapsed"] = c.collapsed;
      row[to_string(r.config.statistics[s])] = e;
    }
    chi[r.predictors[p]] = row;
    if (!r.preservation.empty()) pres[r.predictors[p]] = preservation_json(r.preservation[p]);
  }
  j = Json{{"config", r.config}, {"models", r.base_crps.size()}, {"base_crps", r.base_crps},
           {"delta0", d0},       {"chi", chi},                   {"preservation", pres}};
}

/// One block per predictor: predictor,conditioning,<measured statistics>.
/// Missing correlations are empty cells.
inline void write_preservation_csv(std::ostream& out, const ImportanceReport& r) {
  out << "predictor,conditioning";
  for (SummaryKind k : kSummaryKinds) out << ',' << to_string(k);
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t p = 0; p < r.preservation.size(); ++p) {
    for (std::size_t row = 0; row < 8; ++row) {
      out << r.predictors[p] << ',' << to_string(kSummaryKinds[row]);
      for (std::size_t c = 0; c < 8; ++c) {
        out << ',';
        if (const auto& v = r.preservation[p].entry[row][c]) out << *v;
      }
      out << '\n';
    }
  }
}

}  // namespace enspost

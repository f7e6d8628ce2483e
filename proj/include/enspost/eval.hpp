#pragma once

// Verification: mean CRPS, central prediction intervals at the ensemble-size
// dependent nominal level (M-1)/(M+1), coverage, PIT histograms. Reports are
// written as JSON, as an aligned text table and as PIT CSV.

#include "enspost/data.hpp"
#include "enspost/dist.hpp"

#include <iomanip>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <variant>

namespace enspost {

/// K quantile values on a shared level grid, e.g. the quantile average of a
/// network pool. Scored as a K-member sample.
struct AggregatedForecast {
  std::vector<double> values;
  std::shared_ptr<const QuantileLevels> levels;
};

using Forecast = std::variant<TruncLogistic, BernsteinQuantile, AggregatedForecast>;

inline Forecast to_forecast(const ForecastDistribution& d) {
  return std::visit([](const auto& x) -> Forecast { return x; }, d);
}

inline double nominal_pi_level(Index members) {
  if (members < 2) throw DomainError("nominal_pi_level: M must be at least 2");
  return static_cast<double>(members - 1) / static_cast<double>(members + 1);
}

/// Linear interpolation of the grid quantiles, constant beyond the outer levels.
inline double aggregated_quantile(const AggregatedForecast& f, double p) {
  const auto& tau = f.levels->values();
  const auto& q = f.values;
  if (p <= tau.front()) return q.front();
  if (p >= tau.back()) return q.back();
  const auto it = std::upper_bound(tau.begin(), tau.end(), p);
  const auto k = static_cast<std::size_t>(it - tau.begin());
  const double w = (p - tau[k - 1]) / (tau[k] - tau[k - 1]);
  return q[k - 1] + w * (q[k] - q[k - 1]);
}

/// Inverse of aggregated_quantile; below the first and above the last grid
/// value, and on flat stretches, the PIT is drawn uniformly over the
/// compatible levels.
inline double aggregated_pit(const AggregatedForecast& f, double y, Rng& rng) {
  const auto& tau = f.levels->values();
  const auto& q = f.values;
  const std::size_t K = q.size();
  if (y < q.front()) return tau.front() * uniform01(rng);
  if (y > q.back()) return tau.back() + (1.0 - tau.back()) * uniform01(rng);
  const auto lo = static_cast<std::size_t>(std::lower_bound(q.begin(), q.end(), y) - q.begin());
  const auto hi = static_cast<std::size_t>(std::upper_bound(q.begin(), q.end(), y) - q.begin());
  if (hi > lo) {
    // y equals q[lo..hi-1]; Q is constant on [from, to].
    const double from = lo == 0 ? 0.0 : tau[lo];
    const double to = hi == K ? 1.0 : tau[hi - 1];
    if (to <= from) return from;
    return from + (to - from) * uniform01(rng);
  }
  const std::size_t k = lo;  // q[k-1] < y < q[k]
  const double w = (y - q[k - 1]) / (q[k] - q[k - 1]);
  return tau[k - 1] + w * (tau[k] - tau[k - 1]);
}

inline double quantile(const Forecast& f, double p) {
  if (const auto* a = std::get_if<AggregatedForecast>(&f)) return aggregated_quantile(*a, p);
  if (const auto* t = std::get_if<TruncLogistic>(&f)) return tlogis_quantile(*t, p);
  return bqn_quantile(std::get<BernsteinQuantile>(f), p);
}

inline double crps(const Forecast& f, double y) {
  if (const auto* a = std::get_if<AggregatedForecast>(&f)) return crps_sample(a->values, y);
  if (const auto* t = std::get_if<TruncLogistic>(&f)) return crps_tlogis(*t, y);
  return crps_bqn(std::get<BernsteinQuantile>(f), y);
}

inline double pit(const Forecast& f, double y, Rng& rng) {
  if (const auto* a = std::get_if<AggregatedForecast>(&f)) return aggregated_pit(*a, y, rng);
  if (const auto* t = std::get_if<TruncLogistic>(&f)) return pit(ForecastDistribution{*t}, y, rng);
  return pit(ForecastDistribution{std::get<BernsteinQuantile>(f)}, y, rng);
}

/// Central interval [Q((1-level)/2), Q((1+level)/2)].
inline std::pair<double, double> pi_bounds(const Forecast& f, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("pi_bounds: level must lie in (0,1)");
  return {quantile(f, 0.5 * (1.0 - level)), quantile(f, 0.5 * (1.0 + level))};
}

struct EvaluationReport {
  double mean_crps = 0.0;
  double pi_level = 0.0;
  double mean_pi_length = 0.0;
  double pi_coverage = 0.0;  // percent
  std::vector<long long> pit_histogram;
  std::size_t n_samples = 0;
};

inline void to_json(Json& j, const EvaluationReport& r) {
  j = Json{{"mean_crps", r.mean_crps},
           {"pi_level", r.pi_level},
           {"mean_pi_length", r.mean_pi_length},
           {"pi_coverage", r.pi_coverage},
           {"pit_histogram", r.pit_histogram},
           {"n_samples", r.n_samples}};
}

inline void from_json(const Json& j, EvaluationReport& r) {
  r.mean_crps = j.at("mean_crps").get<double>();
  r.pi_level = j.at("pi_level").get<double>();
  r.mean_pi_length = j.at("mean_pi_length").get<double>();
  r.pi_coverage = j.at("pi_coverage").get<double>();
  r.pit_histogram = j.at("pit_histogram").get<std::vector<long long>>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
}

namespace detail {

struct Accumulator {
  double crps = 0.0, length = 0.0;
  std::size_t covered = 0, n = 0;
  std::vector<long long> hist;

  explicit Accumulator(int bins) : hist(static_cast<std::size_t>(bins), 0) {}

  void add(double c, double lo, double hi, double y, double u) {
    crps += c;
    length += hi - lo;
    covered += (y >= lo && y <= hi) ? 1 : 0;
    const auto b = static_cast<std::size_t>(std::floor(u * static_cast<double>(hist.size())));
    ++hist[std::min(hist.size() - 1, b)];
    ++n;
  }

  EvaluationReport report(double level) const {
    EvaluationReport r;
    const auto dn = static_cast<double>(n);
    r.mean_crps = crps / dn;
    r.pi_level = level;
    r.mean_pi_length = length / dn;
    r.pi_coverage = 100.0 * static_cast<double>(covered) / dn;
    r.pit_histogram = hist;
    r.n_samples = n;
    return r;
  }
};

inline void check_eval_args(std::size_t n_forecasts, std::size_t n_obs, double level, int bins) {
  if (n_forecasts != n_obs) throw ContractError("evaluate: forecasts and observations differ in length");
  if (n_obs == 0) throw DomainError("evaluate: no samples");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("evaluate: level must lie in (0,1)");
  if (bins < 1) throw ConfigError("evaluate: pit_bins must be positive");
}

}  // namespace detail

inline constexpr int kDefaultPitBins = 20;

/// Mean CRPS, PI length and coverage (boundary hits count as covered) and a
/// PIT histogram. PIT randomization draws from the stream seeded by `seed`.
inline EvaluationReport evaluate(std::span<const Forecast> forecasts, std::span<const double> obs, double level,
                                 int pit_bins = kDefaultPitBins, std::uint64_t seed = 0) {
  detail::check_eval_args(forecasts.size(), obs.size(), level, pit_bins);
  Rng rng = make_rng(seed, "eval.pit");
  detail::Accumulator acc(pit_bins);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto [lo, hi] = pi_bounds(forecasts[i], level);
    acc.add(crps(forecasts[i], obs[i]), lo, hi, obs[i], pit(forecasts[i], obs[i], rng));
  }
  return acc.report(level);
}

/// Type-6 sample quantile (plotting position i/(M+1)), clamped to the
/// extreme members. `sorted` ascending.
inline double ensemble_quantile(std::span<const double> sorted, double p) {
  const auto m = static_cast<double>(sorted.size());
  const double h = std::clamp((m + 1.0) * p, 1.0, m);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= sorted.size()) return sorted.back();
  return sorted[lo - 1] + (h - static_cast<double>(lo)) * (sorted[lo] - sorted[lo - 1]);
}

/// Scores the raw ensemble of one predictor. PIT is the randomized rank of the
/// observation among the members.
inline EvaluationReport raw_eps_report(const Dataset& d, std::size_t predictor, double level,
                                       int pit_bins = kDefaultPitBins, std::uint64_t seed = 0) {
  if (predictor >= d.predictors()) throw ConfigError("raw_eps_report: predictor index out of range");
  detail::check_eval_args(d.size(), d.size(), level, pit_bins);
  Rng rng = make_rng(seed, "eval.pit");
  detail::Accumulator acc(pit_bins);
  std::vector<double> x;
  for (const auto& s : d.samples) {
    const auto col = s.ens.col(static_cast<Index>(predictor));
    x.assign(col.begin(), col.end());
    std::sort(x.begin(), x.end());
    const double y = s.obs;
    const double lo = ensemble_quantile(x, 0.5 * (1.0 - level));
    const double hi = ensemble_quantile(x, 0.5 * (1.0 + level));
    const auto below = static_cast<double>(std::lower_bound(x.begin(), x.end(), y) - x.begin());
    const auto ties = static_cast<double>(std::upper_bound(x.begin(), x.end(), y) - x.begin()) - below;
    const double u = (below + (ties + 1.0) * uniform01(rng)) / (static_cast<double>(x.size()) + 1.0);
    acc.add(crps_sample(x, y), lo, hi, y, u);
  }
  return acc.report(level);
}

// ---------------------------------------------------------------------------
// Output

struct ReportRow {
  std::string method;
  EvaluationReport report;
  double crps_min = std::numeric_limits<double>::quiet_NaN();  // spread across resamples, if any
  double crps_max = std::numeric_limits<double>::quiet_NaN();
};

/// Aligned columns: method, CRPS, PI length, PI coverage (plus the resample
/// range of the CRPS when available).
inline void write_table(std::ostream& out, const std::vector<ReportRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.method.size());
  const double level = rows.empty() ? 0.0 : rows.front().report.pi_level;
  out << "Nominal PI level: " << std::fixed << std::setprecision(2) << 100.0 * level << "%\n";
  out << std::left << std::setw(static_cast<int>(w)) << "Method" << std::right << std::setw(10) << "CRPS"
      << std::setw(12) << "PI length" << std::setw(14) << "PI coverage" << std::setw(22) << "CRPS range" << '\n';
  out << std::string(w + 58, '-') << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(w)) << r.method << std::right << std::fixed << std::setprecision(4)
        << std::setw(10) << r.report.mean_crps << std::setw(12) << r.report.mean_pi_length << std::setprecision(2)
        << std::setw(13) << r.report.pi_coverage << '%';
    if (std::isfinite(r.crps_min)) {
      std::ostringstream rng;
      rng << std::fixed << std::setprecision(4) << '[' << r.crps_min << ", " << r.crps_max << ']';
      out << std::setw(22) << rng.str();
    } else {
      out << std::setw(22) << "-";
    }
    out << '\n';
  }
}

/// bin_lo,bin_hi,count for each method (one block per method).
inline void write_pit_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "method,bin_lo,bin_hi,count\n";
  for (const auto& r : rows) {
    const auto& h = r.report.pit_histogram;
    for (std::size_t b = 0; b < h.size(); ++b) {
      const double n = static_cast<double>(h.size());
      out << r.method << ',' << static_cast<double>(b) / n << ',' << static_cast<double>(b + 1) / n << ',' << h[b]
          << '\n';
    }
  }
}

}  // namespace enspost

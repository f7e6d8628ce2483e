#pragma once

// Ensemble datasets: in-memory representation, NDJSON I/O, standardization,
// temporal splitting and a synthetic ensemble-forecast generator.
//
// NDJSON schema, one sample per line:
//   {"time":"YYYY-MM-DD","station":int,"lead":int,"obs":float,
//    "ens":{"<predictor>":[M floats],...},"scalars":{"<name>":float,...}}
// Predictor and scalar order is taken from the first line.

#include "enspost/common.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace enspost {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Calendar helpers (days since 1970-01-01, proleptic Gregorian)

inline int days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

struct CivilDate {
  int year;
  unsigned month;
  unsigned day;
};

inline CivilDate civil_from_days(int z) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

inline std::string format_date(int day) {
  const CivilDate c = civil_from_days(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
  return buf;
}

inline int parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31) {
    throw ConfigError("invalid date '" + s + "' (expected YYYY-MM-DD)");
  }
  const int day = days_from_civil(y, m, d);
  if (format_date(day) != s) throw ConfigError("invalid calendar date '" + s + "'");
  return day;
}

inline int month_of(int day) { return static_cast<int>(civil_from_days(day).month); }

inline int day_of_year(int day) {
  const CivilDate c = civil_from_days(day);
  return day - days_from_civil(c.year, 1, 1) + 1;
}

// ---------------------------------------------------------------------------

struct EnsembleSample {
  Matrix ens;                    // members × predictors
  std::vector<double> scalars;   // member-independent predictors
  int station = 0;
  int day = 0;                   // days since 1970-01-01
  int lead_hours = 0;
  double obs = 0.0;

  Index members() const { return ens.rows(); }
};

struct NormalizationStats {
  std::vector<double> predictor_mean, predictor_std;
  std::vector<double> scalar_mean, scalar_std;

  bool empty() const { return predictor_mean.empty(); }
};

inline void to_json(Json& j, const NormalizationStats& s) {
  j = Json{{"predictor_mean", s.predictor_mean},
           {"predictor_std", s.predictor_std},
           {"scalar_mean", s.scalar_mean},
           {"scalar_std", s.scalar_std}};
}

inline void from_json(const Json& j, NormalizationStats& s) {
  j.at("predictor_mean").get_to(s.predictor_mean);
  j.at("predictor_std").get_to(s.predictor_std);
  j.at("scalar_mean").get_to(s.scalar_mean);
  j.at("scalar_std").get_to(s.scalar_std);
}

struct Dataset {
  std::vector<EnsembleSample> samples;
  std::vector<std::string> predictor_names;
  std::vector<std::string> scalar_names;
  std::size_t primary = 0;
  int stations = 0;
  NormalizationStats normalization;  // empty unless the values are standardized

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Index members() const { return samples.empty() ? 0 : samples.front().members(); }
  std::size_t predictors() const { return predictor_names.size(); }
  std::size_t scalars() const { return scalar_names.size(); }

  /// Same metadata, no samples.
  Dataset shell() const {
    Dataset d;
    d.predictor_names = predictor_names;
    d.scalar_names = scalar_names;
    d.primary = primary;
    d.stations = stations;
    d.normalization = normalization;
    return d;
  }

  std::size_t predictor_index(const std::string& name) const {
    for (std::size_t i = 0; i < predictor_names.size(); ++i) {
      if (predictor_names[i] == name) return i;
    }
    throw ConfigError("unknown predictor '" + name + "'");
  }
};

/// Checks shape consistency, finiteness and ordering; throws ConfigError.
inline void validate(const Dataset& d) {
  const auto p = static_cast<Index>(d.predictor_names.size());
  if (d.primary >= d.predictor_names.size()) throw ConfigError("primary predictor index out of range");
  for (std::size_t t = 0; t < d.samples.size(); ++t) {
    const auto& s = d.samples[t];
    const std::string where = "sample " + std::to_string(t);
    if (s.ens.cols() != p) throw ConfigError(where + ": predictor count mismatch");
    if (s.ens.rows() != d.members()) throw ConfigError(where + ": inconsistent ensemble size");
    if (s.ens.rows() < 2) throw ConfigError(where + ": ensembles need at least 2 members");
    if (s.scalars.size() != d.scalar_names.size()) throw ConfigError(where + ": scalar count mismatch");
    if (s.station < 0 || s.station >= d.stations) throw ConfigError(where + ": station id out of range");
    if (!s.ens.allFinite() || !std::isfinite(s.obs)) throw ConfigError(where + ": non-finite value");
    for (double v : s.scalars) {
      if (!std::isfinite(v)) throw ConfigError(where + ": non-finite scalar");
    }
    if (t > 0) {
      const auto& prev = d.samples[t - 1];
      if (std::pair(prev.day, prev.station) > std::pair(s.day, s.station)) {
        throw ConfigError(where + ": samples not ordered by (time, station)");
      }
    }
  }
}

inline void sort_samples(Dataset& d) {
  std::stable_sort(d.samples.begin(), d.samples.end(), [](const EnsembleSample& a, const EnsembleSample& b) {
    return std::pair(a.day, a.station) < std::pair(b.day, b.station);
  });
}

// ---------------------------------------------------------------------------
// NDJSON

inline Json sample_to_json(const Dataset& d, const EnsembleSample& s) {
  Json ens = Json::object();
  for (std::size_t i = 0; i < d.predictor_names.size(); ++i) {
    std::vector<double> col(static_cast<std::size_t>(s.ens.rows()));
    for (Index m = 0; m < s.ens.rows(); ++m) col[static_cast<std::size_t>(m)] = s.ens(m, static_cast<Index>(i));
    ens[d.predictor_names[i]] = col;
  }
  Json scalars = Json::object();
  for (std::size_t i = 0; i < d.scalar_names.size(); ++i) scalars[d.scalar_names[i]] = s.scalars[i];
  return Json{{"time", format_date(s.day)}, {"station", s.station}, {"lead", s.lead_hours},
              {"obs", s.obs},               {"ens", ens},           {"scalars", scalars}};
}

inline void save_ndjson(const Dataset& d, std::ostream& out) {
  for (const auto& s : d.samples) out << sample_to_json(d, s).dump() << '\n';
}

inline void save_ndjson(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_ndjson(d, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Parses NDJSON; the primary predictor is the first one unless named.
inline Dataset load_ndjson(std::istream& in, const std::string& primary = "") {
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  int max_station = -1;
  auto fail = [&](const std::string& field, const std::string& what) -> ConfigError {
    return ConfigError("line " + std::to_string(lineno) + ", field '" + field + "': " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw fail("<root>", "expected an object");
    for (const char* key : {"time", "station", "lead", "obs", "ens", "scalars"}) {
      if (!j.contains(key)) throw fail(key, "missing");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const std::set<std::string> known{"time", "station", "lead", "obs", "ens", "scalars"};
      if (!known.count(it.key())) throw fail(it.key(), "unknown field");
    }
    EnsembleSample s;
    if (!j["time"].is_string()) throw fail("time", "expected a YYYY-MM-DD string");
    try {
      s.day = parse_date(j["time"].get<std::string>());
    } catch (const ConfigError& e) {
      throw fail("time", e.what());
    }
    if (!j["station"].is_number_integer() || j["station"].get<long long>() < 0) {
      throw fail("station", "expected a non-negative integer");
    }
    s.station = j["station"].get<int>();
    if (!j["lead"].is_number_integer()) throw fail("lead", "expected an integer");
    s.lead_hours = j["lead"].get<int>();
    if (!j["obs"].is_number()) throw fail("obs", "expected a number");
    s.obs = j["obs"].get<double>();
    if (!std::isfinite(s.obs)) throw fail("obs", "non-finite");

    const Json& ens = j["ens"];
    if (!ens.is_object() || ens.empty()) throw fail("ens", "expected a non-empty object");
    if (d.predictor_names.empty()) {
      for (auto it = ens.begin(); it != ens.end(); ++it) d.predictor_names.push_back(it.key());
    }
    if (ens.size() != d.predictor_names.size()) throw fail("ens", "predictor set differs from first line");
    Index members = -1;
    for (std::size_t i = 0; i < d.predictor_names.size(); ++i) {
      const auto& name = d.predictor_names[i];
      if (!ens.contains(name)) throw fail("ens." + name, "missing");
      const Json& arr = ens[name];
      if (!arr.is_array()) throw fail("ens." + name, "expected an array");
      if (members < 0) {
        members = static_cast<Index>(arr.size());
        if (members < 2) throw fail("ens." + name, "ensembles need at least 2 members");
        s.ens.resize(members, static_cast<Index>(d.predictor_names.size()));
      }
      if (static_cast<Index>(arr.size()) != members) throw fail("ens." + name, "inconsistent member count");
      for (Index m = 0; m < members; ++m) {
        const Json& v = arr[static_cast<std::size_t>(m)];
        if (!v.is_number()) throw fail("ens." + name, "expected numbers");
        s.ens(m, static_cast<Index>(i)) = v.get<double>();
        if (!std::isfinite(s.ens(m, static_cast<Index>(i)))) throw fail("ens." + name, "non-finite");
      }
    }
    if (!d.samples.empty() && members != d.samples.front().members()) {
      throw fail("ens", "ensemble size " + std::to_string(members) + " differs from " +
                            std::to_string(d.samples.front().members()));
    }

    const Json& sc = j["scalars"];
    if (!sc.is_object()) throw fail("scalars", "expected an object");
    if (d.samples.empty()) {
      for (auto it = sc.begin(); it != sc.end(); ++it) d.scalar_names.push_back(it.key());
    }
    if (sc.size() != d.scalar_names.size()) throw fail("scalars", "scalar set differs from first line");
    for (const auto& name : d.scalar_names) {
      if (!sc.contains(name) || !sc[name].is_number()) throw fail("scalars." + name, "missing or not a number");
      s.scalars.push_back(sc[name].get<double>());
      if (!std::isfinite(s.scalars.back())) throw fail("scalars." + name, "non-finite");
    }
    max_station = std::max(max_station, s.station);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw DomainError("empty dataset");
  d.stations = max_station + 1;
  if (!primary.empty()) d.primary = d.predictor_index(primary);
  sort_samples(d);
  validate(d);
  return d;
}

inline Dataset load_ndjson(const std::string& path, const std::string& primary = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_ndjson(in, primary);
}

// ---------------------------------------------------------------------------
// Standardization

inline NormalizationStats fit_normalization(const Dataset& d) {
  if (d.empty()) throw DomainError("standardize: empty dataset");
  NormalizationStats st;
  const std::size_t p = d.predictors(), q = d.scalars();
  st.predictor_mean.assign(p, 0.0);
  st.predictor_std.assign(p, 0.0);
  st.scalar_mean.assign(q, 0.0);
  st.scalar_std.assign(q, 0.0);
  double n = 0.0;
  for (const auto& s : d.samples) {
    for (std::size_t i = 0; i < p; ++i) st.predictor_mean[i] += s.ens.col(static_cast<Index>(i)).sum();
    for (std::size_t i = 0; i < q; ++i) st.scalar_mean[i] += s.scalars[i];
    n += static_cast<double>(s.ens.rows());
  }
  const auto t = static_cast<double>(d.size());
  for (auto& v : st.predictor_mean) v /= n;
  for (auto& v : st.scalar_mean) v /= t;
  for (const auto& s : d.samples) {
    for (std::size_t i = 0; i < p; ++i) {
      st.predictor_std[i] += (s.ens.col(static_cast<Index>(i)).array() - st.predictor_mean[i]).square().sum();
    }
    for (std::size_t i = 0; i < q; ++i) st.scalar_std[i] += (s.scalars[i] - st.scalar_mean[i]) * (s.scalars[i] - st.scalar_mean[i]);
  }
  for (std::size_t i = 0; i < p; ++i) {
    st.predictor_std[i] = std::sqrt(st.predictor_std[i] / n);
    if (!(st.predictor_std[i] > 0.0)) throw ConfigError("predictor '" + d.predictor_names[i] + "' has zero variance");
  }
  for (std::size_t i = 0; i < q; ++i) {
    st.scalar_std[i] = std::sqrt(st.scalar_std[i] / t);
    if (!(st.scalar_std[i] > 0.0)) throw ConfigError("scalar '" + d.scalar_names[i] + "' has zero variance");
  }
  return st;
}

inline void check_compatible(const Dataset& d, const NormalizationStats& st) {
  if (st.predictor_mean.size() != d.predictors() || st.predictor_std.size() != d.predictors() ||
      st.scalar_mean.size() != d.scalars() || st.scalar_std.size() != d.scalars()) {
    throw ConfigError("normalization statistics do not match the dataset's predictors");
  }
}

/// (x - mean) / std per predictor and scalar column. Fits the statistics when
/// none are given; observations are left in target units.
inline std::pair<Dataset, NormalizationStats> standardize(const Dataset& d,
                                                          std::optional<NormalizationStats> stats = std::nullopt) {
  NormalizationStats st = stats ? *stats : fit_normalization(d);
  check_compatible(d, st);
  Dataset out = d;
  for (auto& s : out.samples) {
    for (std::size_t i = 0; i < d.predictors(); ++i) {
      auto col = s.ens.col(static_cast<Index>(i));
      col = (col.array() - st.predictor_mean[i]) / st.predictor_std[i];
    }
    for (std::size_t i = 0; i < d.scalars(); ++i) s.scalars[i] = (s.scalars[i] - st.scalar_mean[i]) / st.scalar_std[i];
  }
  out.normalization = st;
  return {std::move(out), st};
}

// ---------------------------------------------------------------------------
// Splitting

struct Splits {
  Dataset train, val, test;
};

/// Contiguous blocks of days in chronological order.
inline Splits split_temporal(const Dataset& d, std::array<double, 3> fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw DomainError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split fractions must sum to 1");
  std::vector<int> days;
  for (const auto& s : d.samples) {
    if (days.empty() || days.back() != s.day) days.push_back(s.day);
  }
  const auto n = static_cast<double>(days.size());
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * n + 0.5));
  const auto n_val = static_cast<std::size_t>(std::floor((fractions[0] + fractions[1]) * n + 0.5)) - n_train;
  if (n_train == 0 || n_val == 0 || n_train + n_val >= days.size()) {
    throw DomainError("split_temporal: fractions produce an empty split");
  }
  const int val_start = days[n_train];
  const int test_start = days[n_train + n_val];
  Splits out{d.shell(), d.shell(), d.shell()};
  for (const auto& s : d.samples) {
    Dataset& dst = s.day < val_start ? out.train : (s.day < test_start ? out.val : out.test);
    dst.samples.push_back(s);
  }
  return out;
}

inline Dataset subset(const Dataset& d, std::size_t begin, std::size_t count) {
  Dataset out = d.shell();
  const std::size_t end = std::min(d.size(), begin + count);
  out.samples.assign(d.samples.begin() + static_cast<std::ptrdiff_t>(std::min(begin, end)),
                     d.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Desk-scale stand-in for an operational ensemble archive.
///
/// Per (day, station) a latent truth y* = base + seasonal cycle + AR(1) anomaly
/// is drawn. The observation adds
///   mean_signal * c        (c visible through the mean of `aux_mean`)
///   skew_signal * k        (k = ±1 visible only through the skewness of `aux_skew`)
///   r^spread_signal * eps  (hidden noise regime r, visible through the spread
///                           of `aux_spread` and of the primary ensemble)
/// and is floored at zero. The primary ensemble is y* + station bias plus
/// underdispersed member noise; `aux_dead` is pure noise.
struct SynthConfig {
  int stations = 20;
  int days = 1500;
  int members = 20;
  std::uint64_t seed = 1;
  int lead_hours = 6;
  std::string start_date = "2010-01-01";
  double bias = 1.0;            // mean station bias of the primary ensemble
  double bias_spread = 0.5;     // std of station biases
  double spread_signal = 1.0;   // exponent of the noise regime
  double skew_signal = 2.0;
  double mean_signal = 1.0;
  double dead_channel = 1.0;    // noise scale of the dead channel
  double underdispersion = 0.35;  // member noise relative to the observation noise
};

inline void to_json(Json& j, const SynthConfig& c) {
  j = Json{{"stations", c.stations},           {"days", c.days},
           {"members", c.members},             {"seed", c.seed},
           {"lead_hours", c.lead_hours},       {"start_date", c.start_date},
           {"bias", c.bias},                   {"bias_spread", c.bias_spread},
           {"spread_signal", c.spread_signal}, {"skew_signal", c.skew_signal},
           {"mean_signal", c.mean_signal},     {"dead_channel", c.dead_channel},
           {"underdispersion", c.underdispersion}};
}

inline void from_json(const Json& j, SynthConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "stations") c.stations = it->get<int>();
    else if (k == "days") c.days = it->get<int>();
    else if (k == "members") c.members = it->get<int>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "lead_hours") c.lead_hours = it->get<int>();
    else if (k == "start_date") c.start_date = it->get<std::string>();
    else if (k == "bias") c.bias = it->get<double>();
    else if (k == "bias_spread") c.bias_spread = it->get<double>();
    else if (k == "spread_signal") c.spread_signal = it->get<double>();
    else if (k == "skew_signal") c.skew_signal = it->get<double>();
    else if (k == "mean_signal") c.mean_signal = it->get<double>();
    else if (k == "dead_channel") c.dead_channel = it->get<double>();
    else if (k == "underdispersion") c.underdispersion = it->get<double>();
    else throw ConfigError("synth." + k + ": unknown field");
  }
}

inline Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.stations < 1 || cfg.days < 1) throw ConfigError("synth: stations and days must be positive");
  if (cfg.members < 2) throw ConfigError("synth: members must be >= 2");
  if (cfg.dead_channel <= 0.0) throw ConfigError("synth: dead_channel must be positive");
  const int start = parse_date(cfg.start_date);
  const int M = cfg.members;
  constexpr double kTwoPi = 6.283185307179586;

  Dataset d;
  d.predictor_names = {"primary", "aux_mean", "aux_spread", "aux_skew", "aux_dead"};
  d.scalar_names = {"yday_cos", "lat", "lon", "alt"};
  d.primary = 0;
  d.stations = cfg.stations;

  struct Station {
    double lat, lon, alt, base, amp, bias, anomaly;
  };
  std::vector<Station> st(static_cast<std::size_t>(cfg.stations));
  Rng srng = make_rng(cfg.seed, "synth.stations");
  for (auto& s : st) {
    s.lat = 47.0 + 8.0 * uniform01(srng);
    s.lon = 6.0 + 9.0 * uniform01(srng);
    s.alt = 1000.0 * uniform01(srng);
    s.base = 8.0 + 3.0 * (s.lat - 47.0) / 8.0 - 0.002 * s.alt + 2.0 * uniform01(srng);
    s.amp = 2.0 + uniform01(srng);
    s.bias = cfg.bias + cfg.bias_spread * standard_normal(srng);
    s.anomaly = 2.0 * standard_normal(srng);
  }

  Rng rng = make_rng(cfg.seed, "synth.weather");
  const double ar = 0.7;
  const double innov = 2.0 * std::sqrt(1.0 - ar * ar);
  std::vector<double> z(static_cast<std::size_t>(M));
  d.samples.reserve(static_cast<std::size_t>(cfg.days) * static_cast<std::size_t>(cfg.stations));
  for (int day = 0; day < cfg.days; ++day) {
    const int date = start + day;
    const double ycos = std::cos(kTwoPi * (day_of_year(date) - 15) / 365.25);
    for (int sid = 0; sid < cfg.stations; ++sid) {
      Station& s = st[static_cast<std::size_t>(sid)];
      s.anomaly = ar * s.anomaly + innov * standard_normal(rng);
      const double truth = s.base + s.amp * ycos + s.anomaly;
      const double regime = std::exp(0.4 * standard_normal(rng));
      const double c = standard_normal(rng);
      const double k = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double noise = std::pow(regime, cfg.spread_signal) * standard_normal(rng);

      EnsembleSample smp;
      smp.station = sid;
      smp.day = date;
      smp.lead_hours = cfg.lead_hours;
      smp.scalars = {ycos, s.lat, s.lon, s.alt};
      smp.obs = std::max(0.0, truth + cfg.mean_signal * c + cfg.skew_signal * k + noise);
      smp.ens.resize(M, 5);

      const double member_sd = cfg.underdispersion * std::pow(regime, cfg.spread_signal);
      for (int m = 0; m < M; ++m) smp.ens(m, 0) = truth + s.bias + member_sd * standard_normal(rng);

      for (int m = 0; m < M; ++m) smp.ens(m, 1) = c + 0.5 * standard_normal(rng);

      const double spread_loc = standard_normal(rng);
      for (int m = 0; m < M; ++m) smp.ens(m, 2) = spread_loc + regime * standard_normal(rng);

      // Skewed members standardized to sample mean 0 / sample std 1, so only
      // the shape carries k.
      double mean = 0.0;
      for (int m = 0; m < M; ++m) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        z[static_cast<std::size_t>(m)] = k * (-std::log(u) - 1.0);
        mean += z[static_cast<std::size_t>(m)];
      }
      mean /= M;
      double var = 0.0;
      for (double& v : z) {
        v -= mean;
        var += v * v;
      }
      const double sd = std::sqrt(var / (M - 1));
      const double skew_loc = standard_normal(rng);
      const double skew_scale = std::exp(0.3 * standard_normal(rng));
      for (int m = 0; m < M; ++m) {
        smp.ens(m, 3) = skew_loc + skew_scale * (sd > 0 ? z[static_cast<std::size_t>(m)] / sd : 0.0);
      }

      for (int m = 0; m < M; ++m) smp.ens(m, 4) = cfg.dead_channel * standard_normal(rng);
      d.samples.push_back(std::move(smp));
    }
  }
  return d;
}

}  // namespace enspost

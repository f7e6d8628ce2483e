#pragma once

// Optimization loop with validation-based epoch selection, network pools,
// quantile aggregation of pools and the draw-k-of-n resampling protocol.

#include "enspost/eval.hpp"
#include "enspost/models.hpp"

#include <chrono>
#include <limits>
#include <numeric>

namespace enspost {

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long long t = 0;

  Adam(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct TrainReport {
  std::string architecture;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // per epoch, training objective (standardized units for networks)
  std::vector<double> val_crps;    // per epoch, mean CRPS in target units
  int selected_epoch = -1;
  double wall_seconds = 0.0;

  double best_val_crps() const { return val_crps.at(static_cast<std::size_t>(selected_epoch)); }
};

/// Wall time is left out: it is reported separately so that reruns produce
/// identical reports.
inline void to_json(Json& j, const TrainReport& r) {
  j = Json{{"architecture", r.architecture},
           {"seed", r.seed},
           {"epochs", r.train_loss.size()},
           {"selected_epoch", r.selected_epoch},
           {"best_val_crps", r.selected_epoch >= 0 ? r.best_val_crps() : 0.0},
           {"train_loss", r.train_loss},
           {"val_crps", r.val_crps}};
}

/// Mean CRPS (closed form or exact Bernstein CRPS) of `m` on prepared samples.
inline double mean_crps(const Model& m, const Batch& all) {
  double total = 0.0;
  constexpr std::size_t chunk = 1024;
  const auto n = static_cast<std::size_t>(all.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(n, begin + chunk); ++i) idx.push_back(i);
    const Batch b = Model::select(all, idx);
    const Matrix theta = m.raw_parameters(b);
    for (Index r = 0; r < theta.rows(); ++r) {
      const std::vector<double> row(theta.row(r).data(), theta.row(r).data() + theta.cols());
      total += crps(m.distribution(row), b.obs[static_cast<std::size_t>(r)]);
    }
  }
  const double v = total / static_cast<double>(n);
  if (!std::isfinite(v)) throw NumericError("validation CRPS is not finite");
  return v;
}

namespace detail {

inline void check_step(double loss, const std::vector<double>& grad, const std::string& where) {
  if (!std::isfinite(loss)) throw NumericError(where + ": loss is not finite");
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError(where + ": gradient is not finite");
  }
}

/// EMOS: global coefficients first, then one set per (station, month) cell
/// with enough training samples, both by full-batch Adam on the mean CRPS.
/// Validation CRPS is recorded every 10 steps of the second stage; the best
/// checkpoint is kept.
inline void fit_emos(Model& m, const Dataset& train, const Dataset& val, TrainReport& rep) {
  const Batch tr = m.prepare(train);
  const Batch va = m.prepare(val);
  const auto cells = m.emos_cell_fitted.size();
  std::vector<int> counts(cells, 0);
  for (Index c : tr.cell) ++counts[static_cast<std::size_t>(c)];

  auto graph = m.loss_graph();
  const double lr = 0.05;
  std::fill(m.emos_cell_fitted.begin(), m.emos_cell_fitted.end(), 0);
  Adam global(m.params.values.size(), lr);
  for (int s = 0; s < m.config.emos_steps; ++s) {
    auto [loss, g] = ad::value_and_grad(graph, m.params.values, tr);
    check_step(loss, g, "emos global step " + std::to_string(s));
    global.step(m.params.values, g);
  }

  auto coef = m.params.view(m.emos_coef);
  for (std::size_t c = 0; c < cells; ++c) {
    m.emos_cell_fitted[c] = counts[c] >= m.config.emos_min_cell ? 1 : 0;
    coef.row(static_cast<Index>(c + 1)) = coef.row(0);
  }
  std::vector<double> best = m.params.values;
  double best_crps = mean_crps(m, va);
  rep.train_loss.push_back(ad::eval(graph, m.params, tr)(0, 0));
  rep.val_crps.push_back(best_crps);
  rep.selected_epoch = 0;
  Adam local(m.params.values.size(), lr);
  for (int s = 1; s <= m.config.emos_steps; ++s) {
    auto [loss, g] = ad::value_and_grad(graph, m.params.values, tr);
    check_step(loss, g, "emos cell step " + std::to_string(s));
    // The global row stays at its stage-one fit.
    std::fill(g.begin() + static_cast<std::ptrdiff_t>(m.emos_coef.offset),
              g.begin() + static_cast<std::ptrdiff_t>(m.emos_coef.offset + 6), 0.0);
    local.step(m.params.values, g);
    if (s % 10 == 0) {
      rep.train_loss.push_back(loss);
      const double v = mean_crps(m, va);
      rep.val_crps.push_back(v);
      if (v < best_crps) {
        best_crps = v;
        best = m.params.values;
        rep.selected_epoch = static_cast<int>(rep.val_crps.size()) - 1;
      }
    }
  }
  m.params.values = best;
}

}  // namespace detail

/// Mini-batch Adam on the training objective; early stopping on validation
/// mean CRPS. Epoch 0 is the first trained epoch; training stops once
/// `patience` epochs pass without improvement, and the best epoch's
/// parameters are returned.
inline std::pair<Model, TrainReport> train_model(const ModelConfig& cfg, const Dataset& train, const Dataset& val) {
  if (train.empty() || val.empty()) throw DomainError("train_model: empty training or validation data");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng init = make_rng(cfg.seed, "model.init");
  Model m = Model::create(cfg, train, init);
  m.check_dataset(val);
  TrainReport rep;
  rep.architecture = to_string(cfg.architecture);
  rep.seed = cfg.seed;

  if (cfg.architecture == Architecture::emos) {
    detail::fit_emos(m, train, val, rep);
  } else {
    const Batch tr = m.prepare(train);
    const Batch va = m.prepare(val);
    const std::size_t n = train.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    auto graph = m.loss_graph();
    Adam opt(m.params.values.size(), cfg.learning_rate);
    std::vector<double> best = m.params.values;
    double best_crps = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      Rng brng = make_rng(cfg.seed, "train.batches", static_cast<std::uint64_t>(epoch));
      const std::vector<std::size_t> order = random_permutation(n, brng);
      double loss_sum = 0.0;
      for (std::size_t begin = 0; begin < n; begin += bs) {
        idx.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(std::min(n, begin + bs)));
        const Batch b = Model::select(tr, idx);
        auto [loss, g] = ad::value_and_grad(graph, m.params.values, b);
        detail::check_step(loss, g,
                           std::string(to_string(cfg.architecture)) + " seed " + std::to_string(cfg.seed) +
                               ", epoch " + std::to_string(epoch) + ", batch " + std::to_string(begin / bs));
        opt.step(m.params.values, g);
        loss_sum += loss * static_cast<double>(idx.size());
      }
      rep.train_loss.push_back(loss_sum / static_cast<double>(n));
      const double v = mean_crps(m, va);
      rep.val_crps.push_back(v);
      if (v < best_crps) {
        best_crps = v;
        best = m.params.values;
        rep.selected_epoch = epoch;
      }
      if (epoch - rep.selected_epoch >= cfg.patience) break;
    }
    m.params.values = best;
  }
  if (!m.params.all_finite()) throw NumericError("training produced non-finite parameters");
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(m), std::move(rep)};
}

struct ModelPool {
  std::vector<Model> models;
  std::vector<TrainReport> reports;

  std::size_t size() const { return models.size(); }
};

/// n independent runs with seeds seed+0 .. seed+n-1, trained on up to
/// `workers` threads. Member order does not depend on the worker count.
inline ModelPool train_pool(const ModelConfig& cfg, const Dataset& train, const Dataset& val, int n, int workers = 1) {
  if (n < 1) throw ConfigError("train_pool: pool size must be at least 1");
  std::vector<std::optional<std::pair<Model, TrainReport>>> slots(static_cast<std::size_t>(n));
  parallel_for(slots.size(), workers, [&](std::size_t i) {
    ModelConfig c = cfg;
    c.seed = cfg.seed + i;
    slots[i] = train_model(c, train, val);
  });
  ModelPool pool;
  for (auto& s : slots) {
    pool.models.push_back(std::move(s->first));
    pool.reports.push_back(std::move(s->second));
  }
  return pool;
}

struct PoolSpread {
  double min = 0.0, median = 0.0, max = 0.0;
};

inline PoolSpread validation_spread(const ModelPool& pool) {
  std::vector<double> v;
  for (const auto& r : pool.reports) v.push_back(r.best_val_crps());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return {v.front(), n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]), v.back()};
}

// ---------------------------------------------------------------------------
// Quantile aggregation

inline Family family_of(const ForecastDistribution& d) {
  return std::holds_alternative<TruncLogistic>(d) ? Family::tlogis : Family::bernstein;
}

/// Level-wise mean of the members' quantile functions.
inline AggregatedForecast aggregate_quantiles(std::span<const ForecastDistribution> members,
                                              std::shared_ptr<const QuantileLevels> levels) {
  if (members.empty()) throw DomainError("aggregate_quantiles: no forecasts");
  const Family fam = family_of(members.front());
  for (const auto& d : members) {
    if (family_of(d) != fam) throw ContractError("aggregate_quantiles: mixed distribution families");
  }
  AggregatedForecast out{std::vector<double>(levels->size(), 0.0), levels};
  for (const auto& d : members) {
    for (std::size_t k = 0; k < levels->size(); ++k) out.values[k] += quantile(d, (*levels)[k]);
  }
  const auto n = static_cast<double>(members.size());
  for (double& v : out.values) v /= n;
  for (std::size_t k = 1; k < out.values.size(); ++k) out.values[k] = std::max(out.values[k], out.values[k - 1]);
  return out;
}

inline AggregatedForecast aggregate_quantiles(const std::vector<const Model*>& models, const EnsembleSample& sample,
                                              std::shared_ptr<const QuantileLevels> levels) {
  std::vector<ForecastDistribution> d;
  for (const Model* m : models) {
    Dataset one;
    one.predictor_names = m->predictor_names;
    one.scalar_names = m->scalar_names;
    one.primary = m->primary;
    one.stations = m->stations;
    one.samples = {sample};
    d.push_back(m->predict(one).front());
  }
  return aggregate_quantiles(d, std::move(levels));
}

/// T×K matrix of one model's quantiles on `levels` for every test sample.
inline Matrix quantile_matrix(const Model& m, const Dataset& test, const QuantileLevels& levels) {
  const auto dists = m.predict(test);
  Matrix q(static_cast<Index>(dists.size()), static_cast<Index>(levels.size()));
  for (std::size_t t = 0; t < dists.size(); ++t) {
    for (std::size_t k = 0; k < levels.size(); ++k) q(static_cast<Index>(t), static_cast<Index>(k)) = quantile(dists[t], levels[k]);
  }
  return q;
}

struct ResampleResult {
  std::vector<EvaluationReport> reports;
  std::vector<std::vector<std::size_t>> draws;
  double mean_crps = 0.0;
  double min_crps = 0.0;
  double max_crps = 0.0;
  double mean_pi_length = 0.0;
  double mean_pi_coverage = 0.0;

  double spread() const { return max_crps - min_crps; }
};

inline void to_json(Json& j, const ResampleResult& r) {
  j = Json{{"mean_crps", r.mean_crps},   {"min_crps", r.min_crps},
           {"max_crps", r.max_crps},     {"spread", r.spread()},
           {"mean_pi_length", r.mean_pi_length}, {"mean_pi_coverage", r.mean_pi_coverage},
           {"draws", r.draws},           {"reports", r.reports}};
}

/// `reps` draws of k pool members (without replacement within a draw), each
/// aggregated by quantile averaging and scored on `test`.
inline ResampleResult resample_and_score(const ModelPool& pool, std::size_t k, std::size_t reps, const Dataset& test,
                                         std::uint64_t seed, double level, int pit_bins = kDefaultPitBins,
                                         std::size_t quantile_count = kDefaultQuantileCount, int workers = 1) {
  if (pool.size() == 0) throw DomainError("resample_and_score: empty pool");
  if (k < 1 || k > pool.size()) throw DomainError("resample_and_score: draw size must lie in [1, pool size]");
  if (reps < 1) throw DomainError("resample_and_score: reps must be positive");
  const Family fam = pool.models.front().family();
  for (const auto& m : pool.models) {
    if (m.family() != fam) throw ContractError("resample_and_score: pool mixes distribution families");
  }
  auto levels = std::make_shared<const QuantileLevels>(QuantileLevels::equidistant(quantile_count));
  std::vector<Matrix> q(pool.size());
  parallel_for(pool.size(), workers, [&](std::size_t j) { q[j] = quantile_matrix(pool.models[j], test, *levels); });
  std::vector<double> obs;
  for (const auto& s : test.samples) obs.push_back(s.obs);

  ResampleResult out;
  out.reports.resize(reps);
  out.draws.resize(reps);
  const Index T = static_cast<Index>(test.size());
  const Index K = static_cast<Index>(levels->size());
  parallel_for(reps, workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, "resample.draw", r);
    std::vector<std::size_t> draw = random_permutation(pool.size(), rng);
    draw.resize(k);
    std::sort(draw.begin(), draw.end());
    Matrix avg = Matrix::Zero(T, K);
    for (std::size_t j : draw) avg += q[j];
    avg /= static_cast<double>(k);
    std::vector<Forecast> f;
    f.reserve(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
      AggregatedForecast a{std::vector<double>(avg.row(t).data(), avg.row(t).data() + K), levels};
      for (std::size_t i = 1; i < a.values.size(); ++i) a.values[i] = std::max(a.values[i], a.values[i - 1]);
      f.emplace_back(std::move(a));
    }
    out.reports[r] = evaluate(f, obs, level, pit_bins, derive_seed(seed, "resample.pit"));
    out.draws[r] = std::move(draw);
  });
  out.min_crps = std::numeric_limits<double>::infinity();
  out.max_crps = -std::numeric_limits<double>::infinity();
  for (const auto& rep : out.reports) {
    out.mean_crps += rep.mean_crps;
    out.mean_pi_length += rep.mean_pi_length;
    out.mean_pi_coverage += rep.pi_coverage;
    out.min_crps = std::min(out.min_crps, rep.mean_crps);
    out.max_crps = std::max(out.max_crps, rep.mean_crps);
  }
  const auto n = static_cast<double>(out.reports.size());
  out.mean_crps /= n;
  out.mean_pi_length /= n;
  out.mean_pi_coverage /= n;
  return out;
}

}  // namespace enspost

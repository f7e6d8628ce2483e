#pragma once

// Inference bodies mapping ensemble samples to raw distribution parameters.
//
//   emos     affine link on the primary mean and standard deviation, one
//            coefficient set per (station, month) plus a global fallback
//   drn/bqn  MLP on summary features (primary mean + std, auxiliary means,
//            scalar predictors, station embedding)
//   ed-*     member-wise encoder, permutation-invariant pooling, decoder
//   st-*     input projection, stacked set-attention blocks, attention pooling
//            with a learnable query, output MLP
//
// The *-drn variants emit (location, raw scale) of a zero-truncated logistic,
// the *-bqn variants emit raw Bernstein coefficients. Networks work in
// standardized target units; Model::distribution() maps back.

#include "enspost/autodiff.hpp"
#include "enspost/data.hpp"
#include "enspost/dist.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace enspost {

enum class Architecture { emos, drn, bqn, ed_drn, ed_bqn, st_drn, st_bqn };
enum class Family { tlogis, bernstein };
enum class PoolKind { mean, max, min, attention };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::emos: return "emos";
    case Architecture::drn: return "drn";
    case Architecture::bqn: return "bqn";
    case Architecture::ed_drn: return "ed-drn";
    case Architecture::ed_bqn: return "ed-bqn";
    case Architecture::st_drn: return "st-drn";
    case Architecture::st_bqn: return "st-bqn";
  }
  return "?";
}

inline Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::emos, Architecture::drn, Architecture::bqn, Architecture::ed_drn, Architecture::ed_bqn,
                 Architecture::st_drn, Architecture::st_bqn}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown architecture '" + s + "'");
}

inline const char* to_string(PoolKind k) {
  switch (k) {
    case PoolKind::mean: return "mean";
    case PoolKind::max: return "max";
    case PoolKind::min: return "min";
    case PoolKind::attention: return "attention";
  }
  return "?";
}

inline PoolKind parse_pool_kind(const std::string& s) {
  for (auto k : {PoolKind::mean, PoolKind::max, PoolKind::min, PoolKind::attention}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown pooling kind '" + s + "'");
}

inline Family family_of(Architecture a) {
  return (a == Architecture::bqn || a == Architecture::ed_bqn || a == Architecture::st_bqn) ? Family::bernstein
                                                                                          : Family::tlogis;
}

inline bool is_set_model(Architecture a) {
  return a == Architecture::ed_drn || a == Architecture::ed_bqn || a == Architecture::st_drn ||
         a == Architecture::st_bqn;
}

struct ModelConfig {
  Architecture architecture = Architecture::drn;
  std::vector<int> hidden{64, 32};  // summary MLP
  int encoder_hidden = 64;
  int decoder_hidden = 64;
  int latent = 64;
  int heads = 8;
  int blocks = 3;
  int degree = kDefaultBernsteinDegree;
  int embedding = 8;
  PoolKind pooling = PoolKind::attention;
  int quantile_levels = static_cast<int>(kDefaultQuantileCount);
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 150;
  int patience = 10;
  std::uint64_t seed = 0;
  int emos_min_cell = 30;  // samples needed to fit a (station, month) set
  int emos_steps = 400;    // full-batch steps per EMOS stage

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string("model.") + name + " must be positive");
    };
    for (int h : hidden) positive(h, "hidden");
    positive(encoder_hidden, "encoder_hidden");
    positive(decoder_hidden, "decoder_hidden");
    positive(latent, "latent");
    positive(heads, "heads");
    positive(blocks, "blocks");
    positive(embedding, "embedding");
    positive(quantile_levels, "quantile_levels");
    positive(batch_size, "batch_size");
    positive(max_epochs, "max_epochs");
    positive(emos_steps, "emos_steps");
    if (patience < 0) throw ConfigError("model.patience must be non-negative");
    if (degree < 1 || degree > 30) throw ConfigError("model.degree must lie in [1, 30]");
    if (latent % heads != 0) throw ConfigError("model.heads must divide model.latent");
    if (!(learning_rate > 0.0)) throw ConfigError("model.learning_rate must be positive");
  }
};

inline void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"architecture", to_string(c.architecture)},
           {"hidden", c.hidden},
           {"encoder_hidden", c.encoder_hidden},
           {"decoder_hidden", c.decoder_hidden},
           {"latent", c.latent},
           {"heads", c.heads},
           {"blocks", c.blocks},
           {"degree", c.degree},
           {"embedding", c.embedding},
           {"pooling", to_string(c.pooling)},
           {"quantile_levels", c.quantile_levels},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"seed", c.seed},
           {"emos_min_cell", c.emos_min_cell},
           {"emos_steps", c.emos_steps}};
}

inline void from_json(const Json& j, ModelConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "architecture") c.architecture = parse_architecture(it->get<std::string>());
    else if (k == "hidden") c.hidden = it->get<std::vector<int>>();
    else if (k == "encoder_hidden") c.encoder_hidden = it->get<int>();
    else if (k == "decoder_hidden") c.decoder_hidden = it->get<int>();
    else if (k == "latent") c.latent = it->get<int>();
    else if (k == "heads") c.heads = it->get<int>();
    else if (k == "blocks") c.blocks = it->get<int>();
    else if (k == "degree") c.degree = it->get<int>();
    else if (k == "embedding") c.embedding = it->get<int>();
    else if (k == "pooling") c.pooling = parse_pool_kind(it->get<std::string>());
    else if (k == "quantile_levels") c.quantile_levels = it->get<int>();
    else if (k == "learning_rate") c.learning_rate = it->get<double>();
    else if (k == "batch_size") c.batch_size = it->get<int>();
    else if (k == "max_epochs") c.max_epochs = it->get<int>();
    else if (k == "patience") c.patience = it->get<int>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "emos_min_cell") c.emos_min_cell = it->get<int>();
    else if (k == "emos_steps") c.emos_steps = it->get<int>();
    else throw ConfigError("model." + k + ": unknown field");
  }
}

// ---------------------------------------------------------------------------
// Ensemble statistics

struct ColumnStats {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator
};

/// Mean and standard deviation of one ensemble column, computed on the
/// sorted values so the result does not depend on member order.
inline ColumnStats column_stats(const Matrix& ens, Index col) {
  const Index m = ens.rows();
  if (m < 2) throw DomainError("ensemble statistics need at least 2 members");
  std::vector<double> v(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] = ens(i, col);
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / static_cast<double>(m);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(m - 1))};
}

/// Summary feature row without the embedding: primary mean and std, the
/// means of all other predictors, then the scalars.
inline std::vector<double> summary_statistics(const EnsembleSample& s, std::size_t primary) {
  if (primary >= static_cast<std::size_t>(s.ens.cols())) throw DomainError("primary predictor index out of range");
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(s.ens.cols()) + 1 + s.scalars.size());
  const ColumnStats ps = column_stats(s.ens, static_cast<Index>(primary));
  f.push_back(ps.mean);
  f.push_back(ps.std);
  for (Index i = 0; i < s.ens.cols(); ++i) {
    if (static_cast<std::size_t>(i) != primary) f.push_back(column_stats(s.ens, i).mean);
  }
  f.insert(f.end(), s.scalars.begin(), s.scalars.end());
  return f;
}

/// Full summary feature vector: summary_statistics followed by the sample's
/// station embedding row.
inline std::vector<double> summary_features(const EnsembleSample& s, std::size_t primary,
                                            const Eigen::Ref<const Matrix>& embedding) {
  if (s.station < 0 || s.station >= embedding.rows()) throw DomainError("station id outside the embedding table");
  std::vector<double> f = summary_statistics(s, primary);
  for (Index c = 0; c < embedding.cols(); ++c) f.push_back(embedding(s.station, c));
  return f;
}

/// EMOS link on one coefficient row [g0, G00, G01, g1, G10, G11]:
/// theta = Gamma (mean, std) + gamma.
inline std::array<double, 2> emos_forward(std::span<const double> coef, double mean, double std) {
  if (coef.size() != 6) throw ConfigError("emos_forward: expected 6 coefficients");
  return {coef[0] + coef[1] * mean + coef[2] * std, coef[3] + coef[4] * mean + coef[5] * std};
}

// ---------------------------------------------------------------------------
// Prepared inputs

/// Model-ready arrays for a set of samples (standardized where the model needs
/// it). Rows of `members` are grouped per sample, `members_per_sample` each.
struct Batch {
  Index members_per_sample = 0;
  Matrix members;   // (n·M) × p, standardized
  Matrix scalars;   // n × q, standardized
  Matrix summary;   // n × (2 + (p-1) + q), from standardized values
  Matrix emos;      // n × 3: [1, primary mean, primary std] in raw units
  std::vector<Index> station;
  std::vector<Index> cell;   // station * 12 + month - 1
  std::vector<double> obs;   // target units
  std::vector<double> obs_std;

  Index size() const { return static_cast<Index>(station.size()); }
};

// ---------------------------------------------------------------------------

struct MlpSlices {
  std::vector<std::pair<ad::Slice, ad::Slice>> layers;  // (W, b)
};

/// Affine layers with tanh between them; the last layer is linear.
inline ad::Var mlp_forward(ad::Tape& t, const MlpSlices& mlp, ad::Var x) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    x = ad::affine(x, t.param(mlp.layers[i].first), t.param(mlp.layers[i].second));
    if (i + 1 < mlp.layers.size()) x = ad::tanh(x);
  }
  return x;
}

struct AttentionSlices {
  ad::Slice wq, wk, wv, wo, bo;
};

/// Multi-head attention with query/key/value projections and output mixing.
/// `xq` holds nq rows per set, `xkv` holds nk rows per set.
inline ad::Var multihead_attention(ad::Tape& t, const AttentionSlices& s, ad::Var xq, ad::Var xkv, Index nq, Index nk,
                                   Index heads) {
  ad::Var q = ad::matmul(xq, t.param(s.wq));
  ad::Var k = ad::matmul(xkv, t.param(s.wk));
  ad::Var v = ad::matmul(xkv, t.param(s.wv));
  ad::Var o = ad::attention(q, k, v, nq, nk, heads);
  return ad::affine(o, t.param(s.wo), t.param(s.bo));
}

/// Attention pooling: one learnable query attends over the `group` latents of
/// every set. Returns one row per set.
inline ad::Var attention_pool(ad::Tape& t, const AttentionSlices& s, const ad::Slice& query, ad::Var latents,
                              Index group, Index heads) {
  if (group <= 0 || latents.rows() % group != 0) throw ConfigError("attention_pool: bad set size");
  const Index sets = latents.rows() / group;
  ad::Var qp = ad::matmul(t.param(query), t.param(s.wq));
  ad::Var q = ad::gather_rows(qp, std::vector<Index>(static_cast<std::size_t>(sets), 0));
  ad::Var k = ad::matmul(latents, t.param(s.wk));
  ad::Var v = ad::matmul(latents, t.param(s.wv));
  ad::Var o = ad::attention(q, k, v, 1, group, heads);
  return ad::affine(o, t.param(s.wo), t.param(s.bo));
}

struct PoolSlices {
  AttentionSlices attn;
  ad::Slice query;
};

inline ad::Var pool(ad::Tape& t, PoolKind kind, const PoolSlices* slices, ad::Var latents, Index group, Index heads) {
  switch (kind) {
    case PoolKind::mean: return ad::reduce_groups(latents, group, ad::Reduce::mean);
    case PoolKind::max: return ad::reduce_groups(latents, group, ad::Reduce::max);
    case PoolKind::min: return ad::reduce_groups(latents, group, ad::Reduce::min);
    case PoolKind::attention:
      if (!slices) throw ConfigError("attention pooling needs parameters");
      return attention_pool(t, slices->attn, slices->query, latents, group, heads);
  }
  throw ConfigError("unknown pooling kind");
}

// ---------------------------------------------------------------------------

class Model {
 public:
  ModelConfig config;
  ad::ParamVector params;
  NormalizationStats norm;
  double target_mean = 0.0;
  double target_std = 1.0;
  double lower = 0.0;  // truncation point in target units
  std::vector<std::string> predictor_names;
  std::vector<std::string> scalar_names;
  std::size_t primary = 0;
  int stations = 0;
  std::vector<std::uint8_t> emos_cell_fitted;  // stations × 12

  Model() = default;

  /// Builds the parameter layout for `dataset`'s metadata and draws initial
  /// weights. `train` supplies normalization statistics and target scaling.
  static Model create(const ModelConfig& cfg, const Dataset& train, Rng& rng) {
    cfg.validate();
    if (train.empty()) throw DomainError("cannot build a model from an empty dataset");
    Model m;
    m.config = cfg;
    m.predictor_names = train.predictor_names;
    m.scalar_names = train.scalar_names;
    m.primary = train.primary;
    m.stations = train.stations;
    if (cfg.architecture == Architecture::emos) {
      m.target_mean = 0.0;
      m.target_std = 1.0;
      m.norm = NormalizationStats{};
    } else {
      m.norm = fit_normalization(train);
      double s = 0.0, ss = 0.0;
      for (const auto& smp : train.samples) s += smp.obs;
      m.target_mean = s / static_cast<double>(train.size());
      for (const auto& smp : train.samples) ss += (smp.obs - m.target_mean) * (smp.obs - m.target_mean);
      m.target_std = std::sqrt(ss / static_cast<double>(train.size()));
      if (!(m.target_std > 0.0)) throw ConfigError("observations have zero variance");
    }
    m.build_layout();
    m.initialize(rng);
    return m;
  }

  Family family() const { return family_of(config.architecture); }
  int output_dim() const { return family() == Family::tlogis ? 2 : config.degree + 1; }
  std::size_t predictors() const { return predictor_names.size(); }
  std::size_t scalars() const { return scalar_names.size(); }
  double lower_standardized() const { return (lower - target_mean) / target_std; }

  /// Rebuilds slice handles after params.layout changed (checkpoint load).
  void bind() { build_layout(/*rebind_only=*/true); }

  // -------------------------------------------------------------------------
  // Inputs

  Batch prepare(const Dataset& d) const {
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return prepare(d, idx);
  }

  Batch prepare(const Dataset& d, std::span<const std::size_t> idx) const {
    check_dataset(d);
    Batch b;
    const Index M = d.members();
    const auto p = static_cast<Index>(predictors());
    const auto q = static_cast<Index>(scalars());
    const auto n = static_cast<Index>(idx.size());
    b.members_per_sample = M;
    const bool nn = config.architecture != Architecture::emos;
    if (nn) {
      if (is_set_model(config.architecture)) b.members.resize(n * M, p);
      b.scalars.resize(n, q);
      b.summary.resize(n, 2 + (p - 1) + q);
    }
    b.emos.resize(n, 3);
    b.station.resize(static_cast<std::size_t>(n));
    b.cell.resize(static_cast<std::size_t>(n));
    b.obs.resize(static_cast<std::size_t>(n));
    b.obs_std.resize(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
      const EnsembleSample& s = d.samples[idx[static_cast<std::size_t>(r)]];
      if (s.members() != M) throw ConfigError("samples in one batch must share the ensemble size");
      const ColumnStats ps = column_stats(s.ens, static_cast<Index>(primary));
      b.emos(r, 0) = 1.0;
      b.emos(r, 1) = ps.mean;
      b.emos(r, 2) = ps.std;
      b.station[static_cast<std::size_t>(r)] = s.station;
      b.cell[static_cast<std::size_t>(r)] = static_cast<Index>(s.station) * 12 + month_of(s.day) - 1;
      b.obs[static_cast<std::size_t>(r)] = s.obs;
      b.obs_std[static_cast<std::size_t>(r)] = (s.obs - target_mean) / target_std;
      if (!nn) continue;
      for (Index c = 0; c < q; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        b.scalars(r, c) = (s.scalars[cs] - norm.scalar_mean[cs]) / norm.scalar_std[cs];
      }
      Index f = 0;
      const auto pi = static_cast<Index>(primary);
      b.summary(r, f++) = (ps.mean - norm.predictor_mean[primary]) / norm.predictor_std[primary];
      b.summary(r, f++) = ps.std / norm.predictor_std[primary];
      for (Index c = 0; c < p; ++c) {
        if (c == pi) continue;
        const auto cs = static_cast<std::size_t>(c);
        b.summary(r, f++) = (column_stats(s.ens, c).mean - norm.predictor_mean[cs]) / norm.predictor_std[cs];
      }
      for (Index c = 0; c < q; ++c) b.summary(r, f++) = b.scalars(r, c);
      if (is_set_model(config.architecture)) {
        for (Index c = 0; c < p; ++c) {
          const auto cs = static_cast<std::size_t>(c);
          b.members.block(r * M, c, M, 1) =
              ((s.ens.col(c).array() - norm.predictor_mean[cs]) / norm.predictor_std[cs]).matrix();
        }
      }
    }
    return b;
  }

  /// Rows `idx` of a prepared batch.
  static Batch select(const Batch& all, std::span<const std::size_t> idx) {
    Batch b;
    const Index M = all.members_per_sample;
    const auto n = static_cast<Index>(idx.size());
    b.members_per_sample = M;
    if (all.members.size()) b.members.resize(n * M, all.members.cols());
    if (all.scalars.size()) b.scalars.resize(n, all.scalars.cols());
    if (all.summary.size()) b.summary.resize(n, all.summary.cols());
    b.emos.resize(n, all.emos.cols());
    for (Index r = 0; r < n; ++r) {
      const auto src = static_cast<Index>(idx[static_cast<std::size_t>(r)]);
      if (all.members.size()) b.members.middleRows(r * M, M) = all.members.middleRows(src * M, M);
      if (all.scalars.size()) b.scalars.row(r) = all.scalars.row(src);
      if (all.summary.size()) b.summary.row(r) = all.summary.row(src);
      b.emos.row(r) = all.emos.row(src);
      b.station.push_back(all.station[static_cast<std::size_t>(src)]);
      b.cell.push_back(all.cell[static_cast<std::size_t>(src)]);
      b.obs.push_back(all.obs[static_cast<std::size_t>(src)]);
      b.obs_std.push_back(all.obs_std[static_cast<std::size_t>(src)]);
    }
    return b;
  }

  // -------------------------------------------------------------------------
  // Graphs

  /// Raw parameters theta, one row per sample.
  ad::Var forward(ad::Tape& t, const Batch& b) const {
    switch (config.architecture) {
      case Architecture::emos: return forward_emos(t, b);
      case Architecture::drn:
      case Architecture::bqn: return forward_summary(t, b);
      case Architecture::ed_drn:
      case Architecture::ed_bqn: return forward_encoder_decoder(t, b);
      case Architecture::st_drn:
      case Architecture::st_bqn: return forward_set_transformer(t, b);
    }
    throw ConfigError("unknown architecture");
  }

  /// Training objective: mean CRPS (logistic family) or mean quantile score
  /// (Bernstein family), in standardized target units.
  ad::Var loss(ad::Tape& t, const Batch& b) const {
    ad::Var theta = forward(t, b);
    if (family() == Family::tlogis) {
      return crps_tlogis_loss(theta, b.obs_std, lower_standardized());
    }
    return quantile_score_loss(theta, b.obs_std, QuantileLevels::equidistant(static_cast<std::size_t>(config.quantile_levels)));
  }

  auto forward_graph() const {
    return [this](ad::Tape& t, const Batch& b) { return forward(t, b); };
  }
  auto loss_graph() const {
    return [this](ad::Tape& t, const Batch& b) { return loss(t, b); };
  }

  Matrix raw_parameters(const Batch& b) const { return ad::eval(forward_graph(), params, b); }

  ForecastDistribution distribution(std::span<const double> theta) const {
    if (family() == Family::tlogis) {
      const TruncLogistic d = tlogis_map(theta[0], theta[1], lower_standardized());
      return TruncLogistic{target_mean + target_std * d.location, target_std * d.scale, lower};
    }
    BernsteinQuantile bq{bqn_coefficients(theta)};
    for (double& a : bq.alpha) a = target_mean + target_std * a;
    return bq;
  }

  std::vector<ForecastDistribution> predict(const Dataset& d) const {
    const Batch all = prepare(d);
    warn_emos_fallback(all);
    std::vector<ForecastDistribution> out;
    out.reserve(d.size());
    constexpr std::size_t chunk = 512;
    for (std::size_t begin = 0; begin < d.size(); begin += chunk) {
      std::vector<std::size_t> idx;
      for (std::size_t i = begin; i < std::min(d.size(), begin + chunk); ++i) idx.push_back(i);
      const Matrix theta = raw_parameters(select(all, idx));
      for (Index r = 0; r < theta.rows(); ++r) {
        std::vector<double> row(theta.row(r).data(), theta.row(r).data() + theta.cols());
        out.push_back(distribution(row));
      }
    }
    return out;
  }

  void check_dataset(const Dataset& d) const {
    if (d.predictor_names != predictor_names) throw ConfigError("dataset predictors do not match the model");
    if (d.scalar_names != scalar_names) throw ConfigError("dataset scalars do not match the model");
    if (d.stations > stations) throw ConfigError("dataset has more stations than the model's embedding");
    if (d.primary != primary) throw ConfigError("dataset primary predictor differs from the model's");
  }

  // Slice handles (public for tests and importance analysis).
  ad::Slice embed;
  MlpSlices summary_mlp, encoder, decoder, input_proj, output_mlp;
  std::vector<AttentionSlices> block_attn;
  std::vector<MlpSlices> block_mlp;
  PoolSlices pooling;
  ad::Slice emos_coef;

 private:
  MlpSlices add_mlp(ad::ParamLayout& l, const std::string& prefix, const std::vector<int>& sizes, bool rebind) {
    MlpSlices m;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const std::string w = prefix + "." + std::to_string(i) + ".W";
      const std::string b = prefix + "." + std::to_string(i) + ".b";
      if (rebind) {
        m.layers.emplace_back(l.find(w), l.find(b));
      } else {
        m.layers.emplace_back(l.add(w, static_cast<std::size_t>(sizes[i]), static_cast<std::size_t>(sizes[i + 1])),
                              l.add(b, 1, static_cast<std::size_t>(sizes[i + 1])));
      }
    }
    return m;
  }

  AttentionSlices add_attention(ad::ParamLayout& l, const std::string& prefix, bool rebind) {
    const auto h = static_cast<std::size_t>(config.latent);
    auto get = [&](const std::string& n, std::size_t r, std::size_t c) {
      return rebind ? l.find(prefix + "." + n) : l.add(prefix + "." + n, r, c);
    };
    AttentionSlices a;
    a.wq = get("Wq", h, h);
    a.wk = get("Wk", h, h);
    a.wv = get("Wv", h, h);
    a.wo = get("Wo", h, h);
    a.bo = get("bo", 1, h);
    return a;
  }

  void build_layout(bool rebind = false) {
    ad::ParamLayout fresh;
    ad::ParamLayout& l = rebind ? params.layout : fresh;
    const int p = static_cast<int>(predictors());
    const int q = static_cast<int>(scalars());
    const int e = config.embedding;
    const int D = output_dim();
    const int h = config.latent;
    auto slice = [&](const std::string& n, std::size_t r, std::size_t c) { return rebind ? l.find(n) : l.add(n, r, c); };
    block_attn.clear();
    block_mlp.clear();
    switch (config.architecture) {
      case Architecture::emos:
        emos_coef = slice("emos.coef", static_cast<std::size_t>(1 + stations * 12), 6);
        break;
      case Architecture::drn:
      case Architecture::bqn: {
        embed = slice("embed", static_cast<std::size_t>(stations), static_cast<std::size_t>(e));
        std::vector<int> sizes{2 + (p - 1) + q + e};
        sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
        sizes.push_back(D);
        summary_mlp = add_mlp(l, "mlp", sizes, rebind);
        break;
      }
      case Architecture::ed_drn:
      case Architecture::ed_bqn:
        embed = slice("embed", static_cast<std::size_t>(stations), static_cast<std::size_t>(e));
        encoder = add_mlp(l, "enc", {p + q + e, config.encoder_hidden, h}, rebind);
        if (config.pooling == PoolKind::attention) {
          pooling.query = slice("pool.query", 1, static_cast<std::size_t>(h));
          pooling.attn = add_attention(l, "pool", rebind);
        }
        decoder = add_mlp(l, "dec", {h, config.decoder_hidden, D}, rebind);
        break;
      case Architecture::st_drn:
      case Architecture::st_bqn:
        embed = slice("embed", static_cast<std::size_t>(stations), static_cast<std::size_t>(e));
        input_proj = add_mlp(l, "in", {p + q + e, h}, rebind);
        for (int bi = 0; bi < config.blocks; ++bi) {
          const std::string pre = "sab" + std::to_string(bi);
          block_attn.push_back(add_attention(l, pre + ".attn", rebind));
          block_mlp.push_back(add_mlp(l, pre + ".mlp", {h, h, h, h}, rebind));
        }
        pooling.query = slice("pma.query", 1, static_cast<std::size_t>(h));
        pooling.attn = add_attention(l, "pma", rebind);
        output_mlp = add_mlp(l, "out", {h, config.decoder_hidden, D}, rebind);
        break;
    }
    if (!rebind) params = ad::ParamVector(std::move(fresh));
    if (config.architecture == Architecture::emos && emos_cell_fitted.size() != static_cast<std::size_t>(stations) * 12) {
      emos_cell_fitted.assign(static_cast<std::size_t>(stations) * 12, 0);
    }
  }

  void init_mlp(const MlpSlices& m, Rng& rng) {
    for (const auto& [w, b] : m.layers) {
      const double lim = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
      auto W = params.view(w);
      for (Index i = 0; i < W.size(); ++i) W.data()[i] = lim * (2.0 * uniform01(rng) - 1.0);
      params.view(b).setZero();
    }
  }

  void init_attention(const AttentionSlices& a, Rng& rng) {
    for (const ad::Slice* s : {&a.wq, &a.wk, &a.wv, &a.wo}) {
      const double lim = std::sqrt(6.0 / static_cast<double>(s->rows + s->cols));
      auto W = params.view(*s);
      for (Index i = 0; i < W.size(); ++i) W.data()[i] = lim * (2.0 * uniform01(rng) - 1.0);
    }
    params.view(a.bo).setZero();
  }

  /// Output biases start at a broad, sensible distribution in standardized units.
  void init_output_bias(const MlpSlices& m) {
    auto b = params.view(m.layers.back().second);
    if (family() == Family::tlogis) {
      b(0, 0) = 0.0;
      b(0, 1) = std::log(std::expm1(0.5));
    } else {
      const int d = config.degree;
      b(0, 0) = -2.0;
      for (int v = 1; v <= d; ++v) b(0, v) = std::log(std::expm1(4.0 / d));
    }
  }

  void initialize(Rng& rng) {
    std::fill(params.values.begin(), params.values.end(), 0.0);
    if (config.architecture == Architecture::emos) {
      auto c = params.view(emos_coef);
      for (Index r = 0; r < c.rows(); ++r) {
        c(r, 0) = 0.0;
        c(r, 1) = 1.0;
        c(r, 2) = 0.0;
        c(r, 3) = std::log(std::expm1(1.0));
        c(r, 4) = 0.0;
        c(r, 5) = 0.5;
      }
      return;
    }
    auto E = params.view(embed);
    for (Index i = 0; i < E.size(); ++i) E.data()[i] = 0.1 * (2.0 * uniform01(rng) - 1.0);
    switch (config.architecture) {
      case Architecture::drn:
      case Architecture::bqn:
        init_mlp(summary_mlp, rng);
        init_output_bias(summary_mlp);
        break;
      case Architecture::ed_drn:
      case Architecture::ed_bqn:
        init_mlp(encoder, rng);
        if (config.pooling == PoolKind::attention) {
          init_attention(pooling.attn, rng);
          auto Q = params.view(pooling.query);
          for (Index i = 0; i < Q.size(); ++i) Q.data()[i] = 2.0 * uniform01(rng) - 1.0;
        }
        init_mlp(decoder, rng);
        init_output_bias(decoder);
        break;
      case Architecture::st_drn:
      case Architecture::st_bqn: {
        init_mlp(input_proj, rng);
        for (std::size_t bi = 0; bi < block_attn.size(); ++bi) {
          init_attention(block_attn[bi], rng);
          init_mlp(block_mlp[bi], rng);
        }
        init_attention(pooling.attn, rng);
        auto Q = params.view(pooling.query);
        for (Index i = 0; i < Q.size(); ++i) Q.data()[i] = 2.0 * uniform01(rng) - 1.0;
        init_mlp(output_mlp, rng);
        init_output_bias(output_mlp);
        break;
      }
      default: break;
    }
  }

  std::vector<Index> emos_rows(const Batch& b) const {
    std::vector<Index> rows(b.cell.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index c = b.cell[i];
      rows[i] = (c >= 0 && static_cast<std::size_t>(c) < emos_cell_fitted.size() && emos_cell_fitted[static_cast<std::size_t>(c)])
                    ? 1 + c
                    : 0;
    }
    return rows;
  }

  void warn_emos_fallback(const Batch& b) const {
    if (config.architecture != Architecture::emos) return;
    std::size_t missing = 0;
    for (Index r : emos_rows(b)) missing += r == 0;
    if (missing > 0) {
      log_warning("EMOS: " + std::to_string(missing) +
                  " samples have no (station, month) coefficient set; using global coefficients");
    }
  }

  ad::Var forward_emos(ad::Tape& t, const Batch& b) const {
    ad::Var coef = ad::gather_rows(t.param(emos_coef), emos_rows(b));
    ad::Var feat = t.constant(b.emos);
    Matrix ones = Matrix::Ones(3, 1);
    ad::Var sum = t.constant(ones);
    ad::Var loc = ad::matmul(ad::mul(ad::slice_cols(coef, 0, 3), feat), sum);
    ad::Var scl = ad::matmul(ad::mul(ad::slice_cols(coef, 3, 3), feat), sum);
    return ad::concat_cols({loc, scl});
  }

  ad::Var forward_summary(ad::Tape& t, const Batch& b) const {
    ad::Var emb = ad::gather_rows(t.param(embed), b.station);
    ad::Var x = ad::concat_cols({t.constant(b.summary), emb});
    return mlp_forward(t, summary_mlp, x);
  }

  /// Member rows: standardized predictors ⧺ scalars ⧺ station embedding.
  ad::Var member_inputs(ad::Tape& t, const Batch& b) const {
    const Index M = b.members_per_sample;
    std::vector<Index> rep(static_cast<std::size_t>(b.size() * M));
    std::vector<Index> st(rep.size());
    for (Index r = 0; r < b.size(); ++r) {
      for (Index m = 0; m < M; ++m) {
        rep[static_cast<std::size_t>(r * M + m)] = r;
        st[static_cast<std::size_t>(r * M + m)] = b.station[static_cast<std::size_t>(r)];
      }
    }
    ad::Var sc = ad::gather_rows(t.constant(b.scalars), rep);
    ad::Var emb = ad::gather_rows(t.param(embed), std::move(st));
    return ad::concat_cols({t.constant(b.members), sc, emb});
  }

  ad::Var forward_encoder_decoder(ad::Tape& t, const Batch& b) const {
    ad::Var lat = mlp_forward(t, encoder, member_inputs(t, b));
    ad::Var pooled = pool(t, config.pooling, &pooling, lat, b.members_per_sample, config.heads);
    return mlp_forward(t, decoder, pooled);
  }

  ad::Var forward_set_transformer(ad::Tape& t, const Batch& b) const {
    const Index M = b.members_per_sample;
    ad::Var x = mlp_forward(t, input_proj, member_inputs(t, b));
    for (std::size_t bi = 0; bi < block_attn.size(); ++bi) {
      ad::Var hres = ad::add(x, multihead_attention(t, block_attn[bi], x, x, M, M, config.heads));
      x = ad::add(hres, mlp_forward(t, block_mlp[bi], hres));
    }
    ad::Var pooled = attention_pool(t, pooling.attn, pooling.query, x, M, config.heads);
    return mlp_forward(t, output_mlp, pooled);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then the parameters as little-endian
// IEEE-754 doubles.

inline Json checkpoint_header(const Model& m) {
  Json layout = Json::array();
  for (const auto& s : m.params.layout.slices()) {
    layout.push_back(Json{{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  std::vector<int> cells(m.emos_cell_fitted.begin(), m.emos_cell_fitted.end());
  return Json{{"format", "enspost-checkpoint-1"},
              {"config", m.config},
              {"layout", layout},
              {"parameter_count", m.params.values.size()},
              {"normalization", m.norm},
              {"target_mean", m.target_mean},
              {"target_std", m.target_std},
              {"lower", m.lower},
              {"predictors", m.predictor_names},
              {"scalars", m.scalar_names},
              {"primary", m.primary},
              {"stations", m.stations},
              {"emos_cells", cells}};
}

inline void save_checkpoint(const Model& m, std::ostream& out) {
  out << checkpoint_header(m).dump() << '\n';
  std::vector<char> buf(m.params.values.size() * 8);
  for (std::size_t i = 0; i < m.params.values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(m.params.values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(m, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Model load_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("checkpoint: missing header");
  Json j;
  try {
    j = Json::parse(header);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("checkpoint: invalid header (") + e.what() + ")");
  }
  if (j.value("format", "") != "enspost-checkpoint-1") throw ConfigError("checkpoint: unknown format");
  Model m;
  m.config = j.at("config").get<ModelConfig>();
  ad::ParamLayout layout;
  for (const auto& s : j.at("layout")) {
    const ad::Slice sl = layout.add(s.at("name").get<std::string>(), s.at("rows").get<std::size_t>(),
                                    s.at("cols").get<std::size_t>());
    if (sl.offset != s.at("offset").get<std::size_t>()) throw ConfigError("checkpoint: layout offsets inconsistent");
  }
  const auto n = j.at("parameter_count").get<std::size_t>();
  if (n != layout.size()) throw ConfigError("checkpoint: parameter count does not match layout");
  std::vector<char> buf(n * 8);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw ConfigError("checkpoint: truncated parameter block");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(b)])) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  m.params = ad::ParamVector(std::move(layout), std::move(values));
  m.norm = j.at("normalization").get<NormalizationStats>();
  m.target_mean = j.at("target_mean").get<double>();
  m.target_std = j.at("target_std").get<double>();
  m.lower = j.at("lower").get<double>();
  m.predictor_names = j.at("predictors").get<std::vector<std::string>>();
  m.scalar_names = j.at("scalars").get<std::vector<std::string>>();
  m.primary = j.at("primary").get<std::size_t>();
  m.stations = j.at("stations").get<int>();
  const auto cells = j.at("emos_cells").get<std::vector<int>>();
  m.emos_cell_fitted.assign(cells.begin(), cells.end());
  m.bind();
  return m;
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace enspost

#pragma once

// Forecast distributions, proper scoring rules and PIT values.
//
// Two families are supported: the logistic distribution left-truncated at a
// bound (zero by default) and the Bernstein quantile function
//   Q(p) = sum_v alpha_v * C(d, v) p^v (1 - p)^(d - v)
// with non-decreasing coefficients alpha.

#include "enspost/autodiff.hpp"
#include "enspost/common.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace enspost {

inline double softplus(double x) { return ad::detail::softplus(x); }
inline double sigmoid(double x) { return ad::detail::sigmoid(x); }

/// Lower bound of the scale parameter produced by tlogis_map.
inline constexpr double kScaleFloor = 1e-6;

struct TruncLogistic {
  double location = 0.0;
  double scale = 1.0;
  double lower = 0.0;  // -inf for the untruncated logistic
};

struct BernsteinQuantile {
  std::vector<double> alpha;
  int degree() const { return static_cast<int>(alpha.size()) - 1; }
};

using ForecastDistribution = std::variant<TruncLogistic, BernsteinQuantile>;

/// Strictly increasing probability levels in (0, 1).
class QuantileLevels {
 public:
  QuantileLevels() = default;
  explicit QuantileLevels(std::vector<double> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw DomainError("quantile levels: empty grid");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!(levels_[i] > 0.0 && levels_[i] < 1.0)) throw DomainError("quantile levels must lie in (0,1)");
      if (i > 0 && !(levels_[i] > levels_[i - 1])) throw DomainError("quantile levels must be strictly increasing");
    }
  }

  /// tau_k = k / (K + 1), k = 1..K.
  static QuantileLevels equidistant(std::size_t count) {
    if (count == 0) throw DomainError("quantile levels: count must be positive");
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k) v[k] = static_cast<double>(k + 1) / static_cast<double>(count + 1);
    return QuantileLevels(std::move(v));
  }

  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }
  const std::vector<double>& values() const { return levels_; }

 private:
  std::vector<double> levels_;
};

inline constexpr std::size_t kDefaultQuantileCount = 99;
inline constexpr int kDefaultBernsteinDegree = 12;

// ---------------------------------------------------------------------------
// Bernstein quantile functions

inline std::vector<double> bernstein_basis(int degree, double p) {
  if (degree < 1) throw DomainError("bernstein_basis: degree must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bernstein_basis: p outside [0,1]");
  std::vector<double> b(static_cast<std::size_t>(degree) + 1);
  double binom = 1.0;
  for (int v = 0; v <= degree; ++v) {
    b[static_cast<std::size_t>(v)] = binom * std::pow(p, v) * std::pow(1.0 - p, degree - v);
    binom = binom * static_cast<double>(degree - v) / static_cast<double>(v + 1);
  }
  return b;
}

/// Basis values at every level: rows = levels, cols = degree + 1.
inline Matrix bernstein_matrix(int degree, const QuantileLevels& levels) {
  Matrix m(static_cast<Index>(levels.size()), degree + 1);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto b = bernstein_basis(degree, levels[k]);
    for (int v = 0; v <= degree; ++v) m(static_cast<Index>(k), v) = b[static_cast<std::size_t>(v)];
  }
  return m;
}

/// alpha_0 = theta_0, alpha_v = alpha_{v-1} + softplus(theta_v).
inline std::vector<double> bqn_coefficients(std::span<const double> theta) {
  if (theta.empty()) throw DomainError("bqn_coefficients: empty parameter vector");
  std::vector<double> alpha(theta.size());
  alpha[0] = theta[0];
  for (std::size_t v = 1; v < theta.size(); ++v) alpha[v] = alpha[v - 1] + softplus(theta[v]);
  return alpha;
}

inline double bqn_quantile(const BernsteinQuantile& dist, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bqn_quantile: p outside [0,1]");
  if (dist.alpha.size() < 2) throw DomainError("bqn_quantile: degree must be >= 1");
  const auto b = bernstein_basis(dist.degree(), p);
  double q = 0.0;
  for (std::size_t v = 0; v < b.size(); ++v) q += dist.alpha[v] * b[v];
  return q;
}

/// Mean over levels of 2 (1{y < Q(tau)} - tau) (Q(tau) - y).
inline double quantile_score_mean(const BernsteinQuantile& dist, double y, const QuantileLevels& levels) {
  double s = 0.0;
  for (double tau : levels.values()) {
    const double q = bqn_quantile(dist, tau);
    s += 2.0 * ((y < q ? 1.0 : 0.0) - tau) * (q - y);
  }
  return s / static_cast<double>(levels.size());
}

namespace detail {

struct GaussLegendre {
  std::vector<double> nodes;    // on [0,1]
  std::vector<double> weights;  // sum to 1
};

inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre gl;
  gl.nodes.resize(static_cast<std::size_t>(n));
  gl.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    gl.nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);
    gl.weights[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return gl;
}

inline const GaussLegendre& gl20() {
  static const GaussLegendre gl = gauss_legendre(20);
  return gl;
}

/// Smallest p with Q(p) >= y (bisection, Q non-decreasing).
inline double bqn_crossing(const BernsteinQuantile& dist, double y, double tol = 1e-13) {
  if (y <= bqn_quantile(dist, 0.0)) return 0.0;
  if (y > bqn_quantile(dist, 1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (bqn_quantile(dist, mid) < y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// CRPS of a Bernstein quantile forecast, CRPS = int_0^1 2 (1{y < Q} - tau)(Q - y) dtau.
/// The integrand is a polynomial on each side of the crossing Q(tau*) = y, so a
/// 20-point Gauss-Legendre rule per piece is exact up to degree 30.
inline double crps_bqn(const BernsteinQuantile& dist, double y) {
  if (dist.degree() > 30) throw DomainError("crps_bqn: degree above 30 not supported");
  const double cross = detail::bqn_crossing(dist, y);
  const auto& gl = detail::gl20();
  double total = 0.0;
  if (cross > 0.0) {
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double tau = cross * gl.nodes[i];
      s += gl.weights[i] * 2.0 * tau * (y - bqn_quantile(dist, tau));
    }
    total += cross * s;
  }
  if (cross < 1.0) {
    double s = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double tau = cross + (1.0 - cross) * gl.nodes[i];
      s += gl.weights[i] * 2.0 * (1.0 - tau) * (bqn_quantile(dist, tau) - y);
    }
    total += (1.0 - cross) * s;
  }
  return std::max(0.0, total);
}

// ---------------------------------------------------------------------------
// Truncated logistic

inline TruncLogistic tlogis_map(double theta0, double theta1, double lower = 0.0) {
  return TruncLogistic{theta0, softplus(theta1) + kScaleFloor, lower};
}

/// Forward-mode dual number with two tangent directions (location, scale).
struct Dual2 {
  double v = 0.0;
  std::array<double, 2> d{0.0, 0.0};

  Dual2() = default;
  Dual2(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual2(double value, std::array<double, 2> deriv) : v(value), d(deriv) {}
};

inline Dual2 operator+(Dual2 a, Dual2 b) { return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1]}}; }
inline Dual2 operator-(Dual2 a, Dual2 b) { return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1]}}; }
inline Dual2 operator-(Dual2 a) { return {-a.v, {-a.d[0], -a.d[1]}}; }
inline Dual2 operator*(Dual2 a, Dual2 b) {
  return {a.v * b.v, {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]}};
}
inline Dual2 operator/(Dual2 a, Dual2 b) {
  const double inv = 1.0 / b.v;
  const double q = a.v * inv;
  return {q, {(a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv}};
}
inline Dual2 chain(Dual2 a, double value, double deriv) { return {value, {deriv * a.d[0], deriv * a.d[1]}}; }
inline Dual2 exp(Dual2 a) {
  const double e = std::exp(a.v);
  return chain(a, e, e);
}
inline Dual2 log1p(Dual2 a) { return chain(a, std::log1p(a.v), 1.0 / (1.0 + a.v)); }
inline double value_of(double x) { return x; }
inline double value_of(Dual2 x) { return x.v; }

namespace detail {

template <class T>
T softplus_t(T x) {
  using std::exp;
  using std::log1p;
  if (value_of(x) > 0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

template <class T>
T logistic_t(T x) {
  using std::exp;
  if (value_of(x) >= 0) return T(1.0) / (T(1.0) + exp(-x));
  const T e = exp(x);
  return e / (T(1.0) + e);
}

/// CRPS of the standard logistic truncated below at `a`, for an observation z >= a.
template <class T>
T crps_std_tlogis(T z, T a) {
  using std::exp;
  using std::log1p;
  if (value_of(a) <= 0.0) {
    // Mass above the bound c >= 1/2: direct form.
    const T p = logistic_t(a);
    const T c = logistic_t(-a);
    const T num = (T(1.0) - T(2.0) * p) * (softplus_t(z) - softplus_t(a)) + p * p * (z - a) + softplus_t(-z) - c;
    return num / (c * c);
  }
  // Bound in the right tail: rewrite around u = exp(-a) to avoid cancellation.
  const T u = exp(-a);
  const T c = u / (T(1.0) + u);
  const T spa = log1p(u);
  const T spz = softplus_t(-z);
  T tail;
  if (value_of(u) < 0.25) {
    // (log1p(u) - u/(1+u)) / c^2 = (1+u)^2 sum_{k>=2} (-1)^k (k-1)/k u^(k-2)
    T series(0.0);
    T upow(1.0);
    for (int k = 2; k < 40; ++k) {
      const double coef = (k % 2 == 0 ? 1.0 : -1.0) * (k - 1.0) / k;
      series = series + upow * T(coef);
      upow = upow * u;
    }
    tail = (T(1.0) + u) * (T(1.0) + u) * series;
  } else {
    tail = (spa - c) / (c * c);
  }
  return (z - a) + T(2.0) * (spz - spa) / c + tail;
}

template <class T>
T crps_tlogis_t(T location, T scale, double lower, double y) {
  const T z = (T(y) - location) / scale;
  if (!std::isfinite(lower)) {
    // Untruncated logistic: sigma (z + 2 softplus(-z) - 1).
    return scale * (z + T(2.0) * softplus_t(-z) - T(1.0));
  }
  const T a = (T(lower) - location) / scale;
  if (value_of(z) < value_of(a)) {
    // Below the bound the CDF is zero: the interval [y, lower] adds its length.
    return scale * ((a - z) + crps_std_tlogis(a, a));
  }
  return scale * crps_std_tlogis(z, a);
}

}  // namespace detail

inline double crps_tlogis(const TruncLogistic& dist, double y) {
  if (!(dist.scale > 0.0)) throw DomainError("crps_tlogis: scale must be positive");
  return std::max(0.0, detail::crps_tlogis_t<double>(dist.location, dist.scale, dist.lower, y));
}

/// CRPS value with its derivatives with respect to (location, scale).
inline Dual2 crps_tlogis_dual(const TruncLogistic& dist, double y) {
  if (!(dist.scale > 0.0)) throw DomainError("crps_tlogis: scale must be positive");
  return detail::crps_tlogis_t<Dual2>(Dual2(dist.location, {1.0, 0.0}), Dual2(dist.scale, {0.0, 1.0}), dist.lower,
                                      y);
}

inline double tlogis_cdf(const TruncLogistic& dist, double x) {
  const double z = (x - dist.location) / dist.scale;
  if (!std::isfinite(dist.lower)) return sigmoid(z);
  const double a = (dist.lower - dist.location) / dist.scale;
  if (z <= a) return 0.0;
  // 1 - F = Lambda(-z) / Lambda(-a) = exp(softplus(a) - softplus(z))
  return std::clamp(-std::expm1(softplus(a) - softplus(z)), 0.0, 1.0);
}

inline double tlogis_quantile(const TruncLogistic& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("tlogis_quantile: p must lie in (0,1)");
  if (!std::isfinite(dist.lower)) return dist.location + dist.scale * (std::log(p) - std::log1p(-p));
  const double a = (dist.lower - dist.location) / dist.scale;
  // Lambda(z) = Lambda(a) + c p with c = Lambda(-a); log c = -softplus(a).
  const double log_c = -softplus(a);
  const double lam = sigmoid(a) + std::exp(log_c) * p;
  const double z = std::log(lam) - (log_c + std::log1p(-p));
  return std::max(dist.lower, dist.location + dist.scale * z);
}

// ---------------------------------------------------------------------------
// Ensembles and generic helpers

/// CRPS of an ensemble (empirical CDF); `sorted` must be ascending.
inline double crps_sample(std::span<const double> sorted, double y) {
  if (sorted.empty()) throw DomainError("crps_sample: empty ensemble");
  const std::size_t m = sorted.size();
  double abs_dev = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0 && sorted[i] < sorted[i - 1]) throw ContractError("crps_sample: values must be sorted ascending");
    abs_dev += std::abs(sorted[i] - y);
    spread += (2.0 * static_cast<double>(i + 1) - static_cast<double>(m) - 1.0) * (sorted[i] - sorted[0]);
  }
  const double md = static_cast<double>(m);
  return std::max(0.0, abs_dev / md - spread / (md * md));
}

inline double quantile(const ForecastDistribution& dist, double p) {
  return std::visit(
      [p](const auto& d) -> double {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, TruncLogistic>) {
          return tlogis_quantile(d, p);
        } else {
          return bqn_quantile(d, p);
        }
      },
      dist);
}

inline double crps(const ForecastDistribution& dist, double y) {
  return std::visit(
      [y](const auto& d) -> double {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, TruncLogistic>) {
          return crps_tlogis(d, y);
        } else {
          return crps_bqn(d, y);
        }
      },
      dist);
}

/// Probability integral transform. For Bernstein forecasts, an observation on a
/// flat stretch of the quantile function gets a uniform draw over that stretch
/// (unified PIT).
inline double pit(const ForecastDistribution& dist, double y, Rng& rng) {
  if (const auto* tl = std::get_if<TruncLogistic>(&dist)) return std::clamp(tlogis_cdf(*tl, y), 0.0, 1.0);
  const auto& bq = std::get<BernsteinQuantile>(dist);
  const double tol = 1e-12 * std::max(1.0, std::abs(y));
  const double q0 = bqn_quantile(bq, 0.0);
  const double q1 = bqn_quantile(bq, 1.0);
  if (y < q0 - tol) return 0.0;
  if (y > q1 + tol) return 1.0;
  // Segment {p : |Q(p) - y| <= tol} = [lo, hi].
  double lo = 0.0;
  if (bqn_quantile(bq, 0.0) < y - tol) {
    double a = 0.0, b = 1.0;
    while (b - a > 1e-12) {
      const double mid = 0.5 * (a + b);
      (bqn_quantile(bq, mid) < y - tol ? a : b) = mid;
    }
    lo = b;
  }
  double hi = 1.0;
  if (bqn_quantile(bq, 1.0) > y + tol) {
    double a = 0.0, b = 1.0;
    while (b - a > 1e-12) {
      const double mid = 0.5 * (a + b);
      (bqn_quantile(bq, mid) > y + tol ? b : a) = mid;
    }
    hi = a;
  }
  if (hi <= lo) return std::clamp(0.5 * (lo + hi), 0.0, 1.0);
  if (hi - lo < 1e-8) return 0.5 * (lo + hi);
  return lo + (hi - lo) * uniform01(rng);
}

// ---------------------------------------------------------------------------
// Loss nodes (mean over rows), used as training objectives

/// theta: n×2 raw parameters mapped through tlogis_map. Returns mean CRPS.
inline ad::Var crps_tlogis_loss(ad::Var theta, std::span<const double> obs, double lower) {
  const Matrix& th = theta.value();
  if (th.cols() != 2 || th.rows() != static_cast<Index>(obs.size())) {
    throw ConfigError("crps_tlogis_loss: expected n x 2 parameters matching observations");
  }
  const Index n = th.rows();
  Matrix dtheta(n, 2);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const TruncLogistic d = tlogis_map(th(i, 0), th(i, 1), lower);
    const Dual2 c = crps_tlogis_dual(d, obs[static_cast<std::size_t>(i)]);
    total += c.v;
    dtheta(i, 0) = c.d[0] / static_cast<double>(n);
    dtheta(i, 1) = c.d[1] * sigmoid(th(i, 1)) / static_cast<double>(n);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  return theta.tape()->push(std::move(out), "crps_tlogis_loss",
                            [theta, dtheta = std::move(dtheta)](ad::Tape& t, const Matrix& g) {
                              t.add_grad(theta, dtheta * g(0, 0));
                            });
}

/// theta: n×(d+1) raw parameters mapped through bqn_coefficients. Returns the
/// mean over rows of the mean quantile score on `levels`.
inline ad::Var quantile_score_loss(ad::Var theta, std::span<const double> obs, const QuantileLevels& levels) {
  const Matrix& th = theta.value();
  if (th.cols() < 2 || th.rows() != static_cast<Index>(obs.size())) {
    throw ConfigError("quantile_score_loss: expected n x (d+1) parameters matching observations");
  }
  const Index n = th.rows();
  const int degree = static_cast<int>(th.cols()) - 1;
  const Matrix basis = bernstein_matrix(degree, levels);
  const auto k = static_cast<double>(levels.size());
  Matrix dtheta(n, th.cols());
  double total = 0.0;
  Eigen::VectorXd alpha(th.cols());
  for (Index i = 0; i < n; ++i) {
    const double y = obs[static_cast<std::size_t>(i)];
    alpha(0) = th(i, 0);
    for (Index v = 1; v < th.cols(); ++v) alpha(v) = alpha(v - 1) + softplus(th(i, v));
    const Eigen::VectorXd q = basis * alpha;
    Eigen::VectorXd dq(q.size());
    double row = 0.0;
    for (Index j = 0; j < q.size(); ++j) {
      const double ind = y < q(j) ? 1.0 : 0.0;
      const double tau = levels[static_cast<std::size_t>(j)];
      row += 2.0 * (ind - tau) * (q(j) - y);
      dq(j) = 2.0 * (ind - tau) / k;
    }
    total += row / k;
    const Eigen::VectorXd dalpha = basis.transpose() * dq;
    // alpha_v depends on theta_j for j <= v: suffix sums.
    double suffix = 0.0;
    for (Index v = th.cols() - 1; v >= 1; --v) {
      suffix += dalpha(v);
      dtheta(i, v) = suffix * sigmoid(th(i, v)) / static_cast<double>(n);
    }
    dtheta(i, 0) = (suffix + dalpha(0)) / static_cast<double>(n);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  return theta.tape()->push(std::move(out), "quantile_score_loss",
                            [theta, dtheta = std::move(dtheta)](ad::Tape& t, const Matrix& g) {
                              t.add_grad(theta, dtheta * g(0, 0));
                            });
}

}  // namespace enspost

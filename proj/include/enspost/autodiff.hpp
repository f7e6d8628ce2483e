#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward evaluation together with its
// adjoint. Parameters live in one flat vector described by a ParamLayout;
// Tape::param() exposes a named slice as a leaf whose gradient is accumulated
// back into a flat gradient buffer with the same layout.
//
// A "graph" is any callable `Var(Tape&, const Inputs&)`. eval(), grad() and
// finite_diff_check() run such a callable on a fresh tape, so they are pure
// functions of (parameters, inputs).

#include "enspost/common.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace enspost::ad {

struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

/// Named, disjoint slices that tile a flat parameter vector in insertion order.
class ParamLayout {
 public:
  Slice add(std::string name, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ConfigError("parameter slice '" + name + "' has zero size");
    if (index_.count(name)) throw ConfigError("duplicate parameter slice '" + name + "'");
    Slice s{std::move(name), size_, rows, cols};
    size_ += s.size();
    index_.emplace(s.name, slices_.size());
    slices_.push_back(s);
    return s;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Slice& find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter slice '" + name + "'");
    return slices_[it->second];
  }

  std::size_t size() const { return size_; }
  const std::vector<Slice>& slices() const { return slices_; }

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    if (a.slices_.size() != b.slices_.size()) return false;
    for (std::size_t i = 0; i < a.slices_.size(); ++i) {
      const auto& x = a.slices_[i];
      const auto& y = b.slices_[i];
      if (x.name != y.name || x.offset != y.offset || x.rows != y.rows || x.cols != y.cols) return false;
    }
    return true;
  }

 private:
  std::vector<Slice> slices_;
  std::map<std::string, std::size_t> index_;
  std::size_t size_ = 0;
};

struct ParamVector {
  ParamLayout layout;
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(ParamLayout l) : layout(std::move(l)), values(layout.size(), 0.0) {}
  ParamVector(ParamLayout l, std::vector<double> v) : layout(std::move(l)), values(std::move(v)) {
    if (values.size() != layout.size()) throw ConfigError("parameter vector does not match its layout");
  }

  Eigen::Map<Matrix> view(const Slice& s) {
    return {values.data() + s.offset, static_cast<Index>(s.rows), static_cast<Index>(s.cols)};
  }
  Eigen::Map<const Matrix> view(const Slice& s) const {
    return {values.data() + s.offset, static_cast<Index>(s.rows), static_cast<Index>(s.cols)};
  }
  Eigen::Map<Matrix> view(const std::string& name) { return view(layout.find(name)); }
  Eigen::Map<const Matrix> view(const std::string& name) const { return view(layout.find(name)); }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(std::span<const double> params = {}) : params_(params), param_grad_(params.size(), 0.0) {
    nodes_.reserve(256);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var param(const Slice& s) {
    if (s.offset + s.size() > params_.size()) throw ConfigError("parameter slice '" + s.name + "' out of range");
    Matrix v = Eigen::Map<const Matrix>(params_.data() + s.offset, static_cast<Index>(s.rows),
                                        static_cast<Index>(s.cols));
    const std::size_t offset = s.offset;
    return push(std::move(v), "param", [offset](Tape& t, const Matrix& g) {
      double* dst = t.param_grad_.data() + offset;
      const double* src = g.data();
      for (Index i = 0; i < g.size(); ++i) dst[i] += src[i];
    });
  }

  Var constant(Matrix m) { return push(std::move(m), "constant", nullptr); }

  Var scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Records a node. `back` receives the node's output gradient and must
  /// accumulate input gradients with add_grad().
  Var push(Matrix value, const char* op, Backward back) {
    if (!value.allFinite()) {
      throw NumericError(std::string("non-finite value produced by '") + op + "' at node " +
                         std::to_string(nodes_.size()));
    }
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back), op});
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(Var v) const { return nodes_[v.id_].value; }
  const char* op_name(Var v) const { return nodes_[v.id_].op; }

  template <class Expr>
  void add_grad(Var v, const Expr& g) {
    Node& n = nodes_[v.id_];
    if (!n.back && n.op == std::string_view("constant")) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Gradient buffer of `v`, allocated as zeros on first use.
  Matrix& grad_buffer(Var v) {
    Node& n = nodes_[v.id_];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool needs_grad(Var v) const {
    const Node& n = nodes_[v.id_];
    return !(n.op == std::string_view("constant"));
  }

  void backward(Var out) {
    if (out.tape_ != this) throw ContractError("backward() on a variable from another tape");
    const Matrix& v = value(out);
    if (v.rows() != 1 || v.cols() != 1) {
      throw ContractError("gradient requested for non-scalar output of shape " + std::to_string(v.rows()) +
                          "x" + std::to_string(v.cols()));
    }
    nodes_[out.id_].grad = Matrix::Ones(1, 1);
    for (std::size_t i = out.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.grad.size() != 0) {
        Matrix g = std::move(n.grad);
        n.back(*this, g);
        n.grad = std::move(g);
      }
    }
  }

  const std::vector<double>& param_grad() const { return param_grad_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    const char* op;
  };

  std::span<const double> params_;
  std::vector<double> param_grad_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

namespace detail {
inline void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("variables from different tapes");
}
inline void require_shape(bool ok, const char* op, Var a, Var b) {
  if (!ok) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// x (n×a) · W (a×b) + b (1×b), bias broadcast over rows.
inline Var affine(Var x, Var w, Var b) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  detail::require_shape(x.cols() == w.rows(), "affine", x, w);
  detail::require_shape(b.rows() == 1 && b.cols() == w.cols(), "affine bias", w, b);
  Tape& t = *x.tape();
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.push(std::move(out), "affine", [x, w, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(x)) t.add_grad(x, g * t.value(w).transpose());
    if (t.needs_grad(w)) t.add_grad(w, t.value(x).transpose() * g);
    if (t.needs_grad(b)) t.add_grad(b, g.colwise().sum());
  });
}

inline Var matmul(Var x, Var w) {
  detail::require_same_tape(x, w);
  detail::require_shape(x.cols() == w.rows(), "matmul", x, w);
  Tape& t = *x.tape();
  Matrix out = x.value() * w.value();
  return t.push(std::move(out), "matmul", [x, w](Tape& t, const Matrix& g) {
    if (t.needs_grad(x)) t.add_grad(x, g * t.value(w).transpose());
    if (t.needs_grad(w)) t.add_grad(w, t.value(x).transpose() * g);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  return a.tape()->push(a.value() + b.value(), "add", [a, b](Tape& t, const Matrix& g) {
    t.add_grad(a, g);
    t.add_grad(b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  return a.tape()->push(a.value() - b.value(), "sub", [a, b](Tape& t, const Matrix& g) {
    t.add_grad(a, g);
    t.add_grad(b, -g);
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same_tape(a, b);
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), "mul", [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.add_grad(a, g.cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.add_grad(b, g.cwiseProduct(t.value(a)));
  });
}

inline Var scale(Var a, double c) {
  return a.tape()->push(a.value() * c, "scale", [a, c](Tape& t, const Matrix& g) { t.add_grad(a, g * c); });
}

inline Var shift(Var a, double c) {
  Matrix out = a.value().array() + c;
  return a.tape()->push(std::move(out), "shift", [a](Tape& t, const Matrix& g) { t.add_grad(a, g); });
}

inline Var tanh(Var a) {
  Matrix out = a.value().array().tanh();
  Matrix saved = out;
  return a.tape()->push(std::move(out), "tanh", [a, saved = std::move(saved)](Tape& t, const Matrix& g) {
    t.add_grad(a, (g.array() * (1.0 - saved.array().square())).matrix());
  });
}

inline Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return detail::sigmoid(x); });
  Matrix saved = out;
  return a.tape()->push(std::move(out), "sigmoid", [a, saved = std::move(saved)](Tape& t, const Matrix& g) {
    t.add_grad(a, (g.array() * saved.array() * (1.0 - saved.array())).matrix());
  });
}

inline Var softplus(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return detail::softplus(x); });
  return a.tape()->push(std::move(out), "softplus", [a](Tape& t, const Matrix& g) {
    t.add_grad(a, (g.array() * t.value(a).unaryExpr([](double x) { return detail::sigmoid(x); }).array()).matrix());
  });
}

inline Var exp(Var a) {
  Matrix out = a.value().array().exp();
  Matrix saved = out;
  return a.tape()->push(std::move(out), "exp", [a, saved = std::move(saved)](Tape& t, const Matrix& g) {
    t.add_grad(a, g.cwiseProduct(saved));
  });
}

inline Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NumericError("log of non-positive value");
  Matrix out = a.value().array().log();
  return a.tape()->push(std::move(out), "log", [a](Tape& t, const Matrix& g) {
    t.add_grad(a, g.cwiseQuotient(t.value(a)));
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

enum class Axis { rows, cols };

/// Softmax along `axis` (cols: each row sums to one).
inline Var softmax(Var a, Axis axis = Axis::cols) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  if (axis == Axis::cols) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      y.row(i) = (x.row(i).array() - m).exp();
      y.row(i) /= y.row(i).sum();
    }
  } else {
    for (Index j = 0; j < x.cols(); ++j) {
      const double m = x.col(j).maxCoeff();
      y.col(j) = (x.col(j).array() - m).exp();
      y.col(j) /= y.col(j).sum();
    }
  }
  Matrix saved = y;
  return a.tape()->push(std::move(y), "softmax", [a, axis, saved = std::move(saved)](Tape& t, const Matrix& g) {
    Matrix gy = g.cwiseProduct(saved);
    Matrix dx(saved.rows(), saved.cols());
    if (axis == Axis::cols) {
      for (Index i = 0; i < saved.rows(); ++i) dx.row(i) = gy.row(i) - saved.row(i) * gy.row(i).sum();
    } else {
      for (Index j = 0; j < saved.cols(); ++j) dx.col(j) = gy.col(j) - saved.col(j) * gy.col(j).sum();
    }
    t.add_grad(a, dx);
  });
}

enum class Reduce { mean, max, min };

/// Reduces consecutive blocks of `group` rows to one row each.
inline Var reduce_groups(Var a, Index group, Reduce kind) {
  const Matrix& x = a.value();
  if (group <= 0 || x.rows() % group != 0) {
    throw ConfigError("reduce_groups: " + std::to_string(x.rows()) + " rows not divisible into groups of " +
                      std::to_string(group));
  }
  const Index n = x.rows() / group;
  Matrix out(n, x.cols());
  std::vector<Index> arg;
  if (kind == Reduce::mean) {
    for (Index g = 0; g < n; ++g) out.row(g) = x.middleRows(g * group, group).colwise().sum() / double(group);
  } else {
    arg.resize(static_cast<std::size_t>(n * x.cols()));
    for (Index g = 0; g < n; ++g) {
      for (Index c = 0; c < x.cols(); ++c) {
        Index best = g * group;
        for (Index r = g * group + 1; r < (g + 1) * group; ++r) {
          const bool better = kind == Reduce::max ? x(r, c) > x(best, c) : x(r, c) < x(best, c);
          if (better) best = r;
        }
        out(g, c) = x(best, c);
        arg[static_cast<std::size_t>(g * x.cols() + c)] = best;
      }
    }
  }
  return a.tape()->push(std::move(out), "reduce_groups",
                        [a, group, kind, arg = std::move(arg)](Tape& t, const Matrix& g) {
                          Matrix& dx = t.grad_buffer(a);
                          const Index n = g.rows();
                          if (kind == Reduce::mean) {
                            for (Index k = 0; k < n; ++k) {
                              for (Index r = 0; r < group; ++r) dx.row(k * group + r) += g.row(k) / double(group);
                            }
                          } else {
                            for (Index k = 0; k < n; ++k) {
                              for (Index c = 0; c < g.cols(); ++c) {
                                dx(arg[static_cast<std::size_t>(k * g.cols() + c)], c) += g(k, c);
                              }
                            }
                          }
                        });
}

inline Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), "sum_all", [a](Tape& t, const Matrix& g) {
    t.add_grad(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

inline Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    detail::require_same_tape(parts.front(), p);
    detail::require_shape(p.rows() == rows, "concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape()->push(std::move(out), "concat_cols", [parts](Tape& t, const Matrix& g) {
    Index c = 0;
    for (const Var& p : parts) {
      const Index w = t.value(p).cols();
      if (t.needs_grad(p)) t.add_grad(p, g.middleCols(c, w));
      c += w;
    }
  });
}

inline Var slice_cols(Var a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.cols()) throw ConfigError("slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(begin, count);
  return a.tape()->push(std::move(out), "slice_cols", [a, begin, count](Tape& t, const Matrix& g) {
    t.grad_buffer(a).middleCols(begin, count) += g;
  });
}

/// Row gather: embedding lookup, or replication of per-set rows to members.
inline Var gather_rows(Var table, std::vector<Index> idx) {
  const Matrix& x = table.value();
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) {
      throw ConfigError("gather_rows: index " + std::to_string(idx[i]) + " outside table of " +
                        std::to_string(x.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = x.row(idx[i]);
  }
  return table.tape()->push(std::move(out), "gather_rows", [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
    if (!t.needs_grad(table)) return;
    Matrix& dx = t.grad_buffer(table);
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

// ---------------------------------------------------------------------------
// Attention

/// Multi-head scaled dot-product attention on already projected inputs.
///
/// Rows are grouped into independent sets: q holds `nq` rows per set and k, v
/// hold `nk` rows per set. Channels are split into `heads` contiguous blocks of
/// width h/heads. Per set and head the output is softmax(q kᵀ / sqrt(h/heads)) v.
inline Var attention(Var q, Var k, Var v, Index nq, Index nk, Index heads) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  const Index h = Q.cols();
  if (heads <= 0 || h % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(h));
  }
  if (K.cols() != h || V.cols() != h || K.rows() != V.rows()) throw ConfigError("attention: key/value shape mismatch");
  if (nq <= 0 || nk <= 0 || Q.rows() % nq != 0 || K.rows() % nk != 0 || Q.rows() / nq != K.rows() / nk) {
    throw ConfigError("attention: inconsistent set sizes");
  }
  const Index sets = Q.rows() / nq;
  const Index dh = h / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  // weights[((s * heads + hd) * nq + i) * nk + j]
  std::vector<double> w(static_cast<std::size_t>(sets * heads * nq * nk));
  Matrix out = Matrix::Zero(Q.rows(), h);
  for (Index s = 0; s < sets; ++s) {
    for (Index hd = 0; hd < heads; ++hd) {
      const Index c0 = hd * dh;
      for (Index i = 0; i < nq; ++i) {
        const double* qi = Q.data() + (s * nq + i) * h + c0;
        double* wi = w.data() + ((s * heads + hd) * nq + i) * nk;
        double m = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < nk; ++j) {
          const double* kj = K.data() + (s * nk + j) * h + c0;
          double acc = 0.0;
          for (Index c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          wi[j] = acc * sc;
          m = std::max(m, wi[j]);
        }
        double z = 0.0;
        for (Index j = 0; j < nk; ++j) {
          wi[j] = std::exp(wi[j] - m);
          z += wi[j];
        }
        double* oi = out.data() + (s * nq + i) * h + c0;
        for (Index j = 0; j < nk; ++j) {
          wi[j] /= z;
          const double* vj = V.data() + (s * nk + j) * h + c0;
          for (Index c = 0; c < dh; ++c) oi[c] += wi[j] * vj[c];
        }
      }
    }
  }
  return q.tape()->push(
      std::move(out), "attention", [q, k, v, nq, nk, heads, sets, dh, sc, w = std::move(w)](Tape& t, const Matrix& g) {
        const Matrix& Q = t.value(q);
        const Matrix& K = t.value(k);
        const Matrix& V = t.value(v);
        const Index h = Q.cols();
        Matrix dQ = Matrix::Zero(Q.rows(), h);
        Matrix dK = Matrix::Zero(K.rows(), h);
        Matrix dV = Matrix::Zero(V.rows(), h);
        std::vector<double> dw(static_cast<std::size_t>(nk));
        for (Index s = 0; s < sets; ++s) {
          for (Index hd = 0; hd < heads; ++hd) {
            const Index c0 = hd * dh;
            for (Index i = 0; i < nq; ++i) {
              const double* wi = w.data() + ((s * heads + hd) * nq + i) * nk;
              const double* gi = g.data() + (s * nq + i) * h + c0;
              double dot = 0.0;
              for (Index j = 0; j < nk; ++j) {
                const double* vj = V.data() + (s * nk + j) * h + c0;
                double* dvj = dV.data() + (s * nk + j) * h + c0;
                double acc = 0.0;
                for (Index c = 0; c < dh; ++c) {
                  acc += gi[c] * vj[c];
                  dvj[c] += wi[j] * gi[c];
                }
                dw[static_cast<std::size_t>(j)] = acc;
                dot += acc * wi[j];
              }
              const double* qi = Q.data() + (s * nq + i) * h + c0;
              double* dqi = dQ.data() + (s * nq + i) * h + c0;
              for (Index j = 0; j < nk; ++j) {
                const double ds = wi[j] * (dw[static_cast<std::size_t>(j)] - dot) * sc;
                const double* kj = K.data() + (s * nk + j) * h + c0;
                double* dkj = dK.data() + (s * nk + j) * h + c0;
                for (Index c = 0; c < dh; ++c) {
                  dqi[c] += ds * kj[c];
                  dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
        if (t.needs_grad(q)) t.add_grad(q, dQ);
        if (t.needs_grad(k)) t.add_grad(k, dK);
        if (t.needs_grad(v)) t.add_grad(v, dV);
      });
}

// ---------------------------------------------------------------------------
// Graph evaluation

template <class Graph, class Inputs>
Matrix eval(const Graph& graph, const ParamVector& params, const Inputs& inputs) {
  Tape tape(params.values);
  Var out = graph(tape, inputs);
  return out.value();
}

template <class Graph, class Inputs>
ParamVector grad(const Graph& graph, const ParamVector& params, const Inputs& inputs) {
  Tape tape(params.values);
  Var out = graph(tape, inputs);
  tape.backward(out);
  return ParamVector(params.layout, tape.param_grad());
}

/// Scalar value and gradient from a single tape.
template <class Graph, class Inputs>
std::pair<double, std::vector<double>> value_and_grad(const Graph& graph, std::span<const double> params,
                                                      const Inputs& inputs) {
  Tape tape(params);
  Var out = graph(tape, inputs);
  tape.backward(out);
  return {out.value()(0, 0), tape.param_grad()};
}

/// Largest |analytic - central difference| / max(1e-5, |analytic|, |central
/// difference|) over all parameters. Uses the fourth-order central stencil;
/// the absolute floor keeps rounding noise on vanishing gradients from
/// dominating.
template <class Graph, class Inputs>
double finite_diff_check(const Graph& graph, const ParamVector& params, const Inputs& inputs, double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff_check: step must be positive");
  const ParamVector analytic = grad(graph, params, inputs);
  ParamVector probe = params;
  auto at = [&](std::size_t i, double x) {
    probe.values[i] = x;
    return eval(graph, probe, inputs)(0, 0);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double x0 = params.values[i];
    const double d1 = at(i, x0 + step) - at(i, x0 - step);
    const double d2 = at(i, x0 + 2.0 * step) - at(i, x0 - 2.0 * step);
    probe.values[i] = x0;
    const double fd = (8.0 * d1 - d2) / (12.0 * step);
    const double a = analytic.values[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({1e-5, std::abs(a), std::abs(fd)}));
  }
  return worst;
}

}  // namespace enspost::ad

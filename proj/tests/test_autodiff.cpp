#include "enspost/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace enspost;
using namespace enspost::ad;

namespace {

ParamVector scalar_param(double x) {
  ParamLayout l;
  l.add("x", 1, 1);
  return ParamVector(l, {x});
}

ParamVector random_params(const ParamLayout& l, std::uint64_t seed, double scale = 1.0) {
  ParamVector p(l);
  Rng rng(seed);
  for (double& v : p.values) v = scale * standard_normal(rng);
  return p;
}

struct NoInput {};

}  // namespace

TEST(Autodiff, SquareValueAndDerivative) {
  auto f = [](Tape& t, const NoInput&) {
    Var x = t.param(Slice{"x", 0, 1, 1});
    return mul(x, x);
  };
  const ParamVector p = scalar_param(3.0);
  EXPECT_DOUBLE_EQ(eval(f, p, NoInput{})(0, 0), 9.0);
  EXPECT_DOUBLE_EQ(grad(f, p, NoInput{}).values[0], 6.0);
}

TEST(Autodiff, SoftplusAtZero) {
  auto f = [](Tape& t, const NoInput&) { return softplus(t.param(Slice{"x", 0, 1, 1})); };
  EXPECT_NEAR(eval(f, scalar_param(0.0), NoInput{})(0, 0), std::log(2.0), 1e-15);
}

TEST(Autodiff, LinearMapGradientIsConstant) {
  auto f = [](Tape& t, const NoInput&) { return scale(t.param(Slice{"x", 0, 1, 1}), 2.75); };
  EXPECT_DOUBLE_EQ(grad(f, scalar_param(-1.3), NoInput{}).values[0], 2.75);
}

TEST(Autodiff, ZeroWeightMlpReturnsLastBias) {
  ParamLayout l;
  const Slice w1 = l.add("w1", 3, 4), b1 = l.add("b1", 1, 4), w2 = l.add("w2", 4, 2), b2 = l.add("b2", 1, 2);
  ParamVector p(l);
  p.view(b1) << 0.3, -0.2, 0.1, 0.5;
  p.view(b2) << 1.5, -2.5;
  Matrix x(2, 3);
  x << 1, 2, 3, -4, 5, 6;
  auto f = [&](Tape& t, const Matrix& in) {
    Var h = tanh(affine(t.constant(in), t.param(w1), t.param(b1)));
    return affine(h, t.param(w2), t.param(b2));
  };
  const Matrix out = eval(f, p, x);
  for (Index r = 0; r < 2; ++r) {
    EXPECT_DOUBLE_EQ(out(r, 0), 1.5);
    EXPECT_DOUBLE_EQ(out(r, 1), -2.5);
  }
}

TEST(Autodiff, NonScalarOutputIsContractViolation) {
  ParamLayout l;
  const Slice s = l.add("v", 1, 3);
  auto f = [&](Tape& t, const NoInput&) { return t.param(s); };
  EXPECT_THROW(grad(f, ParamVector(l), NoInput{}), ContractError);
}

TEST(Autodiff, ShapeMismatchIsConfigError) {
  ParamLayout l;
  const Slice a = l.add("a", 2, 3), b = l.add("b", 3, 2);
  auto f = [&](Tape& t, const NoInput&) { return add(t.param(a), t.param(b)); };
  EXPECT_THROW(eval(f, ParamVector(l), NoInput{}), ConfigError);
}

TEST(Autodiff, NonFiniteNodeNamesOperation) {
  auto f = [](Tape& t, const NoInput&) { return log(t.param(Slice{"x", 0, 1, 1})); };
  try {
    eval(f, scalar_param(-1.0), NoInput{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Autodiff, LayoutSlicesAreDisjointAndCover) {
  ParamLayout l;
  l.add("a", 2, 3);
  l.add("b", 1, 5);
  l.add("c", 4, 1);
  std::size_t next = 0;
  for (const auto& s : l.slices()) {
    EXPECT_EQ(s.offset, next);
    next += s.size();
  }
  EXPECT_EQ(next, l.size());
  EXPECT_THROW(l.add("a", 1, 1), ConfigError);
}

TEST(Autodiff, FiniteDiffExactForLinearAndQuadratic) {
  ParamLayout l;
  const Slice s = l.add("x", 1, 4);
  const ParamVector p = random_params(l, 5);
  auto lin = [&](Tape& t, const NoInput&) {
    Matrix c(4, 1);
    c << 1.0, -2.0, 0.5, 3.0;
    return matmul(t.param(s), t.constant(c));
  };
  auto quad = [&](Tape& t, const NoInput&) {
    Var x = t.param(s);
    return sum_all(mul(x, x));
  };
  for (double step : {1e-1, 1e-3, 1e-5}) {
    EXPECT_LE(finite_diff_check(lin, p, NoInput{}, step), 1e-10);
    EXPECT_LE(finite_diff_check(quad, p, NoInput{}, step), 1e-8);
  }
  EXPECT_THROW(finite_diff_check(lin, p, NoInput{}, 0.0), DomainError);
}

TEST(Autodiff, PrimitiveGradientsMatchFiniteDifferences) {
  ParamLayout l;
  const Slice a = l.add("a", 6, 4), w = l.add("w", 4, 4), b = l.add("b", 1, 4), e = l.add("e", 3, 2);
  Matrix c(6, 4);
  Rng rng(11);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = standard_normal(rng);
  auto f = [&](Tape& t, const Matrix& in) {
    Var x = affine(t.param(a), t.param(w), t.param(b));
    Var s1 = sigmoid(x);
    Var s2 = softplus(sub(x, t.constant(in)));
    Var s3 = exp(scale(tanh(x), 0.5));
    Var s4 = log(shift(mul(s1, s1), 0.1));
    Var sm0 = softmax(mul(s2, s3), Axis::cols);
    Var sm1 = softmax(s4, Axis::rows);
    Var cat = concat_cols({sm0, slice_cols(sm1, 1, 2), gather_rows(t.param(e), {0, 2, 1, 1, 0, 2})});
    Var r1 = reduce_groups(cat, 2, Reduce::mean);
    Var r2 = reduce_groups(cat, 3, Reduce::max);
    Var r3 = reduce_groups(cat, 3, Reduce::min);
    return add(sum_all(mul(r1, r1)), add(mean_all(r2), sum_all(r3)));
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ParamVector p = random_params(l, seed, 0.7);
    EXPECT_LT(finite_diff_check(f, p, c, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(Autodiff, AttentionGradientMatchesFiniteDifferences) {
  ParamLayout l;
  const Slice q = l.add("q", 2 * 3, 8), k = l.add("k", 2 * 5, 8), v = l.add("v", 2 * 5, 8);
  auto f = [&](Tape& t, const NoInput&) {
    Var o = attention(t.param(q), t.param(k), t.param(v), 3, 5, 4);
    return sum_all(mul(o, tanh(o)));
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(finite_diff_check(f, random_params(l, seed), NoInput{}, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(Autodiff, AttentionRejectsIndivisibleHeads) {
  ParamLayout l;
  const Slice q = l.add("q", 1, 6);
  auto f = [&](Tape& t, const NoInput&) { return attention(t.param(q), t.param(q), t.param(q), 1, 1, 4); };
  EXPECT_THROW(eval(f, ParamVector(l), NoInput{}), ConfigError);
}

TEST(Autodiff, GradientIsLinearInTheGraph) {
  ParamLayout l;
  const Slice s = l.add("x", 3, 3);
  auto fa = [&](Tape& t, const NoInput&) { return sum_all(exp(t.param(s))); };
  auto fb = [&](Tape& t, const NoInput&) { return mean_all(tanh(t.param(s))); };
  auto comb = [&](Tape& t, const NoInput& in) { return add(scale(fa(t, in), 2.0), scale(fb(t, in), -3.0)); };
  const ParamVector p = random_params(l, 3);
  const ParamVector ga = grad(fa, p, NoInput{}), gb = grad(fb, p, NoInput{}), gc = grad(comb, p, NoInput{});
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    EXPECT_NEAR(gc.values[i], 2.0 * ga.values[i] - 3.0 * gb.values[i], 1e-12);
  }
}

TEST(Autodiff, EvalIsDeterministic) {
  ParamLayout l;
  const Slice s = l.add("x", 4, 4);
  auto f = [&](Tape& t, const NoInput&) { return softmax(matmul(t.param(s), t.param(s)), Axis::cols); };
  const ParamVector p = random_params(l, 9);
  const Matrix a = eval(f, p, NoInput{}), b = eval(f, p, NoInput{});
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
}

TEST(Autodiff, ReductionsMatchDefinitions) {
  ParamLayout l;
  const Slice s = l.add("x", 4, 2);
  ParamVector p(l, {0, 3, 2, 1, -1, 5, 4, -2});
  auto mean = [&](Tape& t, const NoInput&) { return reduce_groups(t.param(s), 2, Reduce::mean); };
  auto mx = [&](Tape& t, const NoInput&) { return reduce_groups(t.param(s), 2, Reduce::max); };
  const Matrix m = eval(mean, p, NoInput{}), x = eval(mx, p, NoInput{});
  EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(x(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(x(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(x(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(x(1, 1), 5.0);
}

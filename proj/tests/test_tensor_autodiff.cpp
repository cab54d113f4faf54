#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ssnt/error.hpp"
#include "ssnt/graph.hpp"
#include "ssnt/nn.hpp"
#include "ssnt/tensor.hpp"
#include "test_support.hpp"

namespace ssnt {
namespace {

using testing::check_gradients;
using testing::randomize;

TEST(Tensor, ShapeAndStorageAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
}

TEST(Tensor, NonFiniteValuesAreReported) {
  Tensor t = Tensor::vector({1.0, std::nan("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("t"), NumericError);
}

TEST(ParameterSet, NamesAreUnique) {
  ParameterSet ps;
  ps.add("w", {2, 2});
  EXPECT_THROW(ps.add("w", {3}), ConfigError);
  EXPECT_EQ(ps.get("w").gradient.shape(), ps.get("w").value.shape());
}

TEST(Affine, IdentityAndZeroMaps) {
  ParameterSet ps;
  Parameter& w = ps.add("w", {2, 2});
  Parameter& b = ps.add("b", {2});
  w.value = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Graph g;
  auto y = g.value(g.affine(w, g.constant({3, -1}), b));
  EXPECT_EQ(std::vector<double>(y.begin(), y.end()), (std::vector<double>{3, -1}));

  w.value.fill(0.0);
  b.value = Tensor::vector({1, 2});
  Graph g2;
  auto z = g2.value(g2.affine(w, g2.constant({7, -9}), b));
  EXPECT_EQ(std::vector<double>(z.begin(), z.end()), (std::vector<double>{1, 2}));
}

TEST(Affine, MatchesScalarLoop) {
  Rng rng(3);
  ParameterSet ps;
  Parameter& w = ps.add("w", {3, 3});
  Parameter& b = ps.add("b", {3});
  randomize(ps, rng, 1.0);
  std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Graph g;
  auto y = g.value(g.affine(w, g.constant(x), b));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = b.value[r];
    for (std::size_t c = 0; c < 3; ++c) s += w.value.at(r, c) * x[c];
    EXPECT_NEAR(y[r], s, 1e-12);
  }
}

TEST(Affine, ShapeMismatchIsADimensionError) {
  ParameterSet ps;
  Parameter& w = ps.add("w", {2, 3});
  Parameter& b = ps.add("b", {2});
  Graph g;
  EXPECT_THROW(g.affine(w, g.constant({1, 2}), b), DimensionError);
}

TEST(Softmax, Examples) {
  std::vector<double> out(2);
  kernels::softmax(std::vector<double>{0, 0}, out);
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  kernels::softmax(std::vector<double>{1000, 1000}, out);
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);

  std::vector<double> three(3);
  kernels::softmax(std::vector<double>{1, 2, 3}, three);
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(three[k], static_cast<double>(std::exp(static_cast<long double>(k + 1)) / z), 1e-12);
  }
}

TEST(Softmax, RejectsNonFiniteInput) {
  std::vector<double> out(2);
  EXPECT_THROW(kernels::softmax(std::vector<double>{1.0, INFINITY}, out), NumericError);
  EXPECT_THROW(kernels::log_softmax(std::vector<double>{std::nan(""), 0.0}, out), NumericError);
}

TEST(Softmax, SumsToOneForLargeInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.below(20)), out(v.size());
    for (double& x : v) x = rng.uniform(-1000, 1000);
    kernels::softmax(v, out);
    double s = 0.0;
    for (double p : out) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Sigmoid, Examples) {
  EXPECT_EQ(kernels::sigmoid(0.0), 0.5);
  EXPECT_NEAR(kernels::sigmoid(50.0), 1.0, 1e-12);
  EXPECT_NEAR(kernels::sigmoid(1.5), static_cast<double>(1.0L / (1.0L + std::exp(-1.5L))), 1e-15);
  for (double s : {-30.0, -2.5, -0.1, 0.7, 12.0}) {
    EXPECT_NEAR(kernels::sigmoid(s) + kernels::sigmoid(-s), 1.0, 1e-12);
    EXPECT_NEAR(kernels::log_sigmoid(s), std::log(kernels::sigmoid(s)), 1e-12);
  }
  EXPECT_NEAR(kernels::log_sigmoid(-800.0), -800.0, 1e-9);
}

TEST(LogSumExp, HandlesInfinities) {
  EXPECT_EQ(kernels::log_sum_exp(std::vector<double>{kNegInf, kNegInf}), kNegInf);
  EXPECT_DOUBLE_EQ(kernels::log_sum_exp(std::vector<double>{kNegInf, 2.0}), 2.0);
  EXPECT_NEAR(kernels::log_add_exp(std::log(0.25), std::log(0.5)), std::log(0.75), 1e-15);
}

// Gate-by-gate reference with gate order input, forget, candidate, output.
void reference_lstm(const Tensor& w, const Tensor& b, const std::vector<double>& x,
                    const std::vector<double>& h0, const std::vector<double>& c0,
                    std::vector<double>& h, std::vector<double>& c) {
  const std::size_t H = h0.size(), E = x.size();
  auto pre = [&](std::size_t row) {
    long double s = b[row];
    for (std::size_t k = 0; k < E; ++k) s += static_cast<long double>(w.at(row, k)) * x[k];
    for (std::size_t k = 0; k < H; ++k) s += static_cast<long double>(w.at(row, E + k)) * h0[k];
    return s;
  };
  auto sig = [](long double s) { return 1.0L / (1.0L + std::exp(-s)); };
  h.assign(H, 0.0);
  c.assign(H, 0.0);
  for (std::size_t u = 0; u < H; ++u) {
    const long double i = sig(pre(u));
    const long double f = sig(pre(H + u));
    const long double g = std::tanh(pre(2 * H + u));
    const long double o = sig(pre(3 * H + u));
    const long double cn = f * c0[u] + i * g;
    c[u] = static_cast<double>(cn);
    h[u] = static_cast<double>(o * std::tanh(cn));
  }
}

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  ParameterSet ps;
  LstmLayer layer = LstmLayer::create(ps, "l", 2, 3);
  LstmState s = layer.step(LstmState::zeros(3), std::vector<double>{0.3, -2.0});
  for (double v : s.h) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, MatchesGateOracleAndIsDeterministic) {
  Rng rng(5);
  ParameterSet ps;
  LstmLayer layer = LstmLayer::create(ps, "l", 2, 3);
  randomize(ps, rng, 0.8);
  std::vector<double> x = {0.4, -0.9};
  LstmState prev{{0.1, -0.2, 0.3}, {0.5, 0.0, -0.4}};
  LstmState a = layer.step(prev, x);
  LstmState b = layer.step(prev, x);
  EXPECT_EQ(a, b);
  std::vector<double> h, c;
  reference_lstm(layer.w->value, layer.b->value, x, prev.h, prev.c, h, c);
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_NEAR(a.h[u], h[u], 1e-12);
    EXPECT_NEAR(a.c[u], c[u], 1e-12);
  }
  Graph g;
  LstmNodes n = layer.step(g, {g.constant(prev.h), g.constant(prev.c)}, g.constant(x));
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_EQ(g.value(n.h)[u], a.h[u]);
    EXPECT_EQ(g.value(n.c)[u], a.c[u]);
  }
}

TEST(Backward, TrivialCases) {
  ParameterSet ps;
  Parameter& p = ps.add("p", {1});
  Parameter& unused = ps.add("q", {2});
  p.value[0] = 0.7;
  {
    Graph g;
    g.backward(g.param(p));
  }
  EXPECT_EQ(p.gradient[0], 1.0);
  ps.zero_gradients();
  {
    Graph g;
    const NodeId parts[2] = {g.param(p), g.param(p)};
    NodeId loss = g.sum(std::vector<NodeId>{g.add(parts[0], parts[1])});
    g.backward(loss);
  }
  EXPECT_EQ(p.gradient[0], 2.0);
  EXPECT_EQ(unused.gradient[0], 0.0);
  EXPECT_EQ(unused.gradient[1], 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph g;
  NodeId v = g.constant({1.0, 2.0});
  EXPECT_THROW(g.backward(v), ContractError);
}

TEST(Backward, IndependentParameterGetsExactlyZero) {
  Rng rng(2);
  ParameterSet ps;
  Parameter& w = ps.add("w", {2, 2});
  Parameter& other = ps.add("other", {2, 2});
  randomize(ps, rng, 1.0);
  Graph g;
  NodeId y = g.tanh(g.matvec(w, g.constant({0.3, 0.4})));
  g.backward(g.sum(std::vector<NodeId>{g.dot(y, y)}));
  for (double v : other.gradient.data()) EXPECT_EQ(v, 0.0);
}

// Every differentiable primitive participates in one scalar objective.
TEST(Backward, FiniteDifferencesOnEveryPrimitive) {
  Rng rng(17);
  ParameterSet ps;
  Parameter& emb = ps.add("emb", {4, 3});
  Parameter& w1 = ps.add("w1", {3, 5});
  Parameter& b1 = ps.add("b1", {3});
  Parameter& w2 = ps.add("w2", {4, 3});
  Parameter& v = ps.add("v", {3});
  LstmLayer lstm = LstmLayer::create(ps, "lstm", 3, 2);
  randomize(ps, rng, 0.7);

  auto loss = [&](Graph& g) {
    NodeId e0 = g.lookup(emb, 1), e1 = g.lookup(emb, 3);
    NodeId cat_parts[2] = {g.slice(e0, 0, 2), g.slice(e1, 0, 3)};
    NodeId x = g.concat(cat_parts);                                // 5
    NodeId h1 = g.tanh(g.affine(w1, x, b1));                      // 3
    NodeId h2 = g.mul(g.sigmoid(h1), g.sub(h1, g.param(v)));      // 3
    LstmNodes s = lstm.step(g, lstm.zero_state(g), h2);
    s = lstm.step(g, s, g.scale(h1, 0.5));
    NodeId logits = g.matvec(w2, g.add(h2, g.neg(g.param(v))));  // 4
    NodeId lp = g.log_softmax(logits);
    NodeId sm = g.softmax(logits);
    NodeId terms[5] = {g.pick(lp, 2), g.log_softmax_pick(logits, 0), g.dot(sm, logits),
                       g.log_sigmoid(g.pick(s.h, 1)), g.dot(s.c, s.h)};
    NodeId lse_parts[2] = {terms[0], terms[3]};
    NodeId all[3] = {g.sum(terms), g.log_sum_exp(lse_parts), g.pick(h1, 0)};
    return g.neg(g.sum(all));
  };
  auto r = check_gradients(ps, loss, 1e-5);
  EXPECT_EQ(r.tensors_checked, ps.size());
  EXPECT_LE(r.worst_error, 1e-4) << r.worst_tensor;
}

TEST(Backward, FiniteDifferencesTwoLayerNetwork) {
  Rng rng(23);
  ParameterSet ps;
  Parameter& w1 = ps.add("w1", {6, 4});
  Parameter& b1 = ps.add("b1", {6});
  Parameter& w2 = ps.add("w2", {3, 6});
  Parameter& b2 = ps.add("b2", {3});
  randomize(ps, rng, 1.0);
  std::vector<double> x = {0.2, -0.5, 0.9, 0.1};
  auto loss = [&](Graph& g) {
    NodeId h = g.tanh(g.affine(w1, g.constant(x), b1));
    return g.neg(g.log_softmax_pick(g.affine(w2, h, b2), 1));
  };
  auto r = check_gradients(ps, loss);
  EXPECT_LE(r.worst_error, 1e-4) << r.worst_tensor;
}

TEST(Adam, ZeroGradientLeavesParameterAndDecaysMoments) {
  ParameterSet ps;
  Parameter& p = ps.add("p", {1});
  p.value[0] = 0.25;
  Adam adam(ps, {});
  p.gradient[0] = 2.0;
  adam.step();
  const double m1 = adam.first_moments()[0][0], v1 = adam.second_moments()[0][0];
  const double after_first = p.value[0];
  adam.step();
  EXPECT_EQ(adam.steps(), 2u);
  EXPECT_DOUBLE_EQ(adam.first_moments()[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(adam.second_moments()[0][0], 0.999 * v1);
  // A zero gradient still moves the parameter while moments are non-zero;
  // from a fresh state it does not.
  EXPECT_NE(p.value[0], after_first);
  ParameterSet fresh;
  Parameter& q = fresh.add("q", {2});
  q.value = Tensor::vector({1.0, -1.0});
  Adam a2(fresh, {});
  a2.step();
  EXPECT_EQ(q.value[0], 1.0);
  EXPECT_EQ(q.value[1], -1.0);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  ParameterSet ps;
  Parameter& p = ps.add("p", {3});
  p.value = Tensor::vector({0.5, -0.5, 0.0});
  const std::vector<double> g = {0.3, -2.0, 1e-9};
  for (int k = 0; k < 3; ++k) p.gradient[k] = g[k];
  Adam adam(ps, {0.001});
  adam.step();
  for (int k = 0; k < 3; ++k) {
    const double m_hat = (0.1 * g[k]) / (1 - 0.9);
    const double v_hat = (0.001 * g[k] * g[k]) / (1 - 0.999);
    const double expected = (k == 0 ? 0.5 : k == 1 ? -0.5 : 0.0) - 0.001 * m_hat / (std::sqrt(v_hat) + 1e-8);
    EXPECT_NEAR(p.value[k], expected, 1e-15);
    EXPECT_EQ(p.gradient[k], 0.0);
  }
  // Roughly a sign step of size eta for gradients well above epsilon.
  EXPECT_NEAR(p.value[0], 0.5 - 0.001, 1e-9);
  EXPECT_NEAR(p.value[1], -0.5 + 0.001, 1e-9);
  EXPECT_EQ(AdamConfig{}.learning_rate, 0.001);
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  std::vector<double> v = {1, 2, 3};
  EXPECT_EQ(dropout(v, 0.0, rng, true), v);
  EXPECT_EQ(dropout(v, 0.7, rng, false), v);
  EXPECT_THROW(dropout(v, 1.0, rng, true), ConfigError);
  EXPECT_THROW(dropout(v, -0.1, rng, true), ConfigError);
}

TEST(Dropout, KeepFractionAndMean) {
  Rng rng(99);
  std::vector<double> v(100000, 1.0);
  auto out = dropout(v, 0.5, rng, true);
  std::size_t kept = 0;
  double sum = 0.0;
  for (double x : out) {
    if (x != 0.0) {
      ++kept;
      EXPECT_EQ(x, 2.0);
    }
    sum += x;
  }
  EXPECT_NEAR(static_cast<double>(kept) / v.size(), 0.5, 0.01);
  EXPECT_NEAR(sum / v.size(), 1.0, 0.02);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int k = 0; k < 1000; ++k) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
  Rng d(5);
  for (int k = 0; k < 1000; ++k) {
    const double u = d.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(d.below(7), 7u);
  }
}

TEST(Clip, ScalesToMaxNorm) {
  ParameterSet ps;
  Parameter& p = ps.add("p", {2});
  p.gradient = Tensor::vector({30.0, 40.0});
  EXPECT_DOUBLE_EQ(clip_gradient_norm(ps, 5.0), 50.0);
  EXPECT_NEAR(p.gradient[0], 3.0, 1e-12);
  EXPECT_NEAR(p.gradient[1], 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(clip_gradient_norm(ps, 5.0), 5.0);
}

TEST(Init, UniformRangeAndForgetBias) {
  Rng rng(8);
  ParameterSet ps;
  LstmLayer layer = LstmLayer::create(ps, "l", 3, 4);
  init_parameters(ps, rng);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (double v : ps[k].value.data()) {
      EXPECT_LE(std::abs(v), 0.08);
    }
  }
  set_forget_bias(layer);
  for (std::size_t u = 0; u < 4; ++u) EXPECT_EQ(layer.b->value[4 + u], 1.0);
}

}  // namespace
}  // namespace ssnt

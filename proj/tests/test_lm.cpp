#include <gtest/gtest.h>

#include <cmath>

#include "ssnt/error.hpp"
#include "ssnt/lm.hpp"
#include "test_support.hpp"

namespace ssnt {
namespace {

using testing::check_gradients;
using testing::randomize;

LmConfig tiny(std::size_t words = 5, std::size_t hidden = 4, std::size_t layers = 2) {
  return {kReservedCount + words, 3, hidden, layers};
}

TEST(LmStart, DeterministicAndZeroForZeroParameters) {
  LanguageModel zero(tiny());
  LmState s = zero.start();
  EXPECT_EQ(s, zero.start());
  EXPECT_EQ(s.consumed, 0u);
  ASSERT_EQ(s.layers.size(), 2u);
  for (const auto& layer : s.layers) {
    for (double v : layer.h) EXPECT_EQ(v, 0.0);
  }
}

TEST(LmScoreNext, UniformForZeroParameters) {
  LanguageModel zero(tiny());
  const double expected = -std::log(9.0);
  LmState s = zero.start();
  for (TokenId t = 0; t < 9; ++t) EXPECT_NEAR(zero.score_next(s, t).first, expected, 1e-15);
  std::vector<TokenId> y = {4, 5, 6, 7, kEos};
  const double lp = zero.sequence_log_prob(y);
  EXPECT_NEAR(std::exp(-lp / static_cast<double>(y.size())), 9.0, 1e-12);
}

TEST(LmScoreNext, NormalizedAtEveryStep) {
  Rng rng(1);
  LanguageModel lm(tiny(), rng);
  randomize(lm.params(), rng, 1.0);
  LmState s = lm.start();
  for (TokenId t : {4, 8, 5, 5, 6}) {
    double total = 0.0;
    for (std::size_t k = 0; k < lm.vocab_size(); ++k) total += std::exp(lm.score_next(s, static_cast<TokenId>(k)).first);
    EXPECT_NEAR(total, 1.0, 1e-12);
    auto [lp, next] = lm.score_next(s, t);
    EXPECT_EQ(lp, s.next_log_probs[static_cast<std::size_t>(t)]);
    EXPECT_EQ(next, lm.advance(s, t));
    EXPECT_EQ(next.consumed, s.consumed + 1);
    s = next;
  }
  EXPECT_THROW(lm.score_next(s, 42), DataError);
}

TEST(LmScoreNext, PrefixDeterminism) {
  Rng rng(2);
  LanguageModel lm(tiny(), rng);
  randomize(lm.params(), rng, 1.0);
  LmState a = lm.advance(lm.advance(lm.start(), 4), 7);
  LmState other = lm.advance(lm.advance(lm.start(), 8), 6);
  (void)other;
  LmState b = lm.advance(lm.advance(lm.start(), 4), 7);
  EXPECT_EQ(a, b);
}

TEST(LmNll, MatchesIncrementalScoring) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    LanguageModel lm(tiny(5, 4, 1 + trial % 2), rng);
    randomize(lm.params(), rng, 1.0);
    std::vector<TokenId> y(rng.below(6));
    for (auto& t : y) t = static_cast<TokenId>(kReservedCount + rng.below(5));
    y.push_back(kEos);
    Graph g;
    EXPECT_LE(std::abs(g.scalar_value(lm.nll(g, y)) + lm.sequence_log_prob(y)), 1e-9);
  }
}

TEST(LmNll, EosOnly) {
  Rng rng(4);
  LanguageModel lm(tiny(), rng);
  randomize(lm.params(), rng, 1.0);
  Graph g;
  EXPECT_NEAR(g.scalar_value(lm.nll(g, std::vector<TokenId>{kEos})),
              -lm.start().next_log_probs[kEos], 1e-12);
  Graph g2;
  EXPECT_THROW(lm.nll(g2, std::vector<TokenId>{4, 5}), DataError);
}

TEST(LmNll, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  LanguageModel lm(tiny(), rng);
  randomize(lm.params(), rng, 0.5);
  std::vector<TokenId> y = {5, 4, 7, kEos};
  auto r = check_gradients(lm.params(), [&](Graph& g) { return lm.nll(g, y); });
  EXPECT_EQ(r.tensors_checked, lm.params().size());
  EXPECT_LE(r.worst_error, 1e-4) << r.worst_tensor;
}

double train_steps(LanguageModel& lm, const std::vector<std::vector<TokenId>>& data, std::size_t epochs,
                   double lr, Rng& rng) {
  Adam adam(lm.params(), {lr});
  std::vector<std::size_t> order(data.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  double last = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += 16) {
      Graph g;
      std::vector<NodeId> losses;
      for (std::size_t k = start; k < std::min(start + 16, order.size()); ++k) {
        losses.push_back(lm.nll(g, data[order[k]]));
      }
      NodeId loss = g.scale(g.sum(losses), 1.0 / static_cast<double>(losses.size()));
      last = g.scalar_value(loss);
      g.backward(loss);
      clip_gradient_norm(lm.params(), 5.0);
      adam.step();
    }
  }
  return last;
}

TEST(LmTraining, MemorizesOneSentence) {
  Rng rng(6);
  LanguageModel lm(tiny(5, 8, 1), rng);
  std::vector<TokenId> y = {6, 4, 8, 5, kEos};
  std::vector<std::vector<TokenId>> data(16, y);
  train_steps(lm, data, 800, 0.02, rng);
  EXPECT_LT(-lm.sequence_log_prob(y) / static_cast<double>(y.size()), 0.01);
}

// A known first-order source over four words plus EOS.
struct BigramSource {
  // Rows: previous token (START, then words 4..7); columns: words 4..7, EOS.
  std::vector<std::vector<double>> p = {
      {0.6, 0.3, 0.1, 0.0, 0.0},
      {0.0, 0.7, 0.2, 0.0, 0.1},
      {0.1, 0.0, 0.0, 0.7, 0.2},
      {0.5, 0.0, 0.0, 0.2, 0.3},
      {0.0, 0.4, 0.3, 0.0, 0.3},
  };
  static std::size_t row(TokenId prev) { return prev == kStart ? 0 : static_cast<std::size_t>(prev) - 3; }
  static TokenId token(std::size_t col) { return col == 4 ? kEos : static_cast<TokenId>(col + 4); }
  static std::size_t col(TokenId t) { return t == kEos ? 4 : static_cast<std::size_t>(t) - 4; }

  std::vector<TokenId> sample(Rng& rng) const {
    std::vector<TokenId> y;
    TokenId prev = kStart;
    while (true) {
      double u = rng.uniform();
      std::size_t c = 0;
      while (c + 1 < 5 && u >= p[row(prev)][c]) u -= p[row(prev)][c++];
      prev = token(c);
      y.push_back(prev);
      if (prev == kEos || y.size() >= 30) break;
    }
    if (y.back() != kEos) y.push_back(kEos);
    return y;
  }
  double log_prob(const std::vector<TokenId>& y) const {
    double lp = 0.0;
    TokenId prev = kStart;
    for (TokenId t : y) {
      lp += std::log(p[row(prev)][col(t)]);
      prev = t;
    }
    return lp;
  }
};

TEST(LmTraining, ApproachesBigramSourcePerplexity) {
  BigramSource source;
  Rng data_rng(7);
  std::vector<std::vector<TokenId>> train, held_out;
  for (int k = 0; k < 1500; ++k) train.push_back(source.sample(data_rng));
  for (int k = 0; k < 300; ++k) {
    auto y = source.sample(data_rng);
    // Capped samples are not source sequences.
    if (y.size() < 30) held_out.push_back(y);
  }
  Rng rng(8);
  LanguageModel lm({kReservedCount + 4, 8, 16, 1}, rng);
  auto perplexity = [&](auto&& lp) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& y : held_out) {
      total += lp(y);
      tokens += y.size();
    }
    return std::exp(-total / static_cast<double>(tokens));
  };
  const double truth = perplexity([&](const auto& y) { return source.log_prob(y); });
  const double before = perplexity([&](const auto& y) { return lm.sequence_log_prob(y); });
  train_steps(lm, train, 8, 0.01, rng);
  const double after = perplexity([&](const auto& y) { return lm.sequence_log_prob(y); });
  EXPECT_LT(after, before);
  EXPECT_LE(after, 1.10 * truth) << "truth " << truth << " before " << before;
}

}  // namespace
}  // namespace ssnt

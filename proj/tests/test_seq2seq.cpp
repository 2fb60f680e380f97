#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace unmt;

namespace {

Vocabulary vx() { return testutil::vocab_of({"a", "b", "c"}); }
Vocabulary vy() { return testutil::vocab_of({"p", "q", "r", "s"}); }

Seq2SeqModel toy(int dim = 4, std::uint64_t seed = 1) { return Seq2SeqModel(vx(), vy(), Seq2SeqHyper{.dim = dim, .seed = seed}); }

Sentence ids(std::initializer_list<int> v) {
  Sentence s;
  for (int t : v) s.push_back(static_cast<TokenId>(special::kCount + t));
  return s;
}

bool same_params(const ParamSet& a, const ParamSet& b) {
  for (std::size_t i = 0; i < kBlockCount; ++i)
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || !(a[i].array() == b[i].array()).all()) return false;
  return true;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b, double scale_b = 1.0) {
  double worst = 0;
  for (std::size_t i = 0; i < kBlockCount; ++i) worst = std::max(worst, (a[i] - scale_b * b[i]).cwiseAbs().maxCoeff());
  return worst;
}

std::vector<TrainPair> random_batch(Rng& rng, std::size_t n) {
  std::vector<TrainPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainPair p;
    for (std::size_t k = 0, len = 1 + rng.below(4); k < len; ++k) p.x.push_back(static_cast<TokenId>(special::kCount + rng.below(3)));
    for (std::size_t k = 0, len = rng.below(4); k < len; ++k) p.y.push_back(static_cast<TokenId>(special::kCount + rng.below(4)));
    p.weight = 0.1 + 0.9 * rng.uniform();
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Seq2SeqInit, SeedDeterminesParameters) {
  auto a = toy(4, 3), b = toy(4, 3), c = toy(4, 4);
  EXPECT_TRUE(same_params(a.params(), b.params()));
  EXPECT_FALSE(same_params(a.params(), c.params()));
  for (std::size_t i = 0; i < kBlockCount; ++i) EXPECT_LE(a.params()[i].cwiseAbs().maxCoeff(), 0.08);
  EXPECT_THROW(Seq2SeqModel(vx(), vy(), Seq2SeqHyper{.dim = 1}), Error);
}

TEST(Seq2SeqScoring, StepDistributionsAreNormalized) {
  auto m = toy();
  for (const auto& d : m.step_distributions(ids({0, 1, 2}), ids({3, 0}))) EXPECT_NEAR(d.sum(), 1.0, 1e-6);
}

TEST(Seq2SeqScoring, FreshModelIsNearUniform) {
  auto m = toy(8);
  // The softmax spans the whole target vocabulary, specials included.
  double uniform = 2 * std::log(1.0 / static_cast<double>(m.target_vocab().size()));
  for (int w = 0; w < 4; ++w) EXPECT_NEAR(m.log_prob(ids({0, 1}), ids({w})), uniform, 0.5);
}

TEST(Seq2SeqScoring, EmptyInputsAndBatchContext) {
  auto m = toy();
  EXPECT_EQ(m.log_prob({}, ids({1})), m.log_prob({special::kDummy}, ids({1})));
  auto dists = m.step_distributions(ids({0}), {});
  ASSERT_EQ(dists.size(), 1u);
  EXPECT_NEAR(m.log_prob(ids({0}), {}), std::log(dists[0](special::kEos)), 1e-12);
  Rng rng(2);
  auto batch = random_batch(rng, 10);
  double alone = m.log_prob(batch[3].x, batch[3].y);
  auto g = m.compute_gradient(batch);
  EXPECT_EQ(m.log_prob(batch[3].x, batch[3].y), alone);
  EXPECT_GT(g.loss, 0.0);
  EXPECT_THROW(m.log_prob(ids({0}), {static_cast<TokenId>(99)}), Error);
}

TEST(Seq2SeqGradient, MatchesFiniteDifferences) {
  for (double spread : {1.0, 6.0}) {
    auto m = toy(3, 5);
    for (auto& b : m.params().blocks) b *= spread;
    std::vector<TrainPair> batch = {{ids({0, 1, 2}), ids({3, 1}), 1.0}, {ids({2}), ids({0, 0, 2}), 0.4}};
    auto analytic = m.compute_gradient(batch).grad;
    auto numeric = oracle::numeric_gradient(m, [&] { return m.compute_gradient(batch).loss; }, 1e-5);
    EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-4) << "spread " << spread;
  }
}

TEST(Seq2SeqGradient, HalfWeightsHalveTheUnnormalizedGradient) {
  auto m = toy();
  Rng rng(6);
  auto full = random_batch(rng, 12);
  for (auto& p : full) p.weight = 1.0;
  auto half = full;
  for (auto& p : half) p.weight = 0.5;
  auto g1 = m.compute_gradient(full), g2 = m.compute_gradient(half);
  // Weighted sums: sum_i w_i * grad nll_i.
  ParamSet s1 = g1.grad, s2 = g2.grad;
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    s1[b] *= g1.weight_sum;
    s2[b] *= g2.weight_sum;
  }
  EXPECT_LT(max_abs_diff(s2, s1, 0.5), 1e-14);
  // The optimised loss is normalized by the weight sum, so uniform scaling cancels.
  EXPECT_LT(max_abs_diff(g2.grad, g1.grad), 1e-14);
  EXPECT_NEAR(g2.loss, g1.loss, 1e-12);
}

TEST(Seq2SeqGradient, DuplicatedHalfWeightPairEqualsSingleUnitPair) {
  auto m = toy();
  Rng rng(8);
  auto rest = random_batch(rng, 5);
  auto one = rest, two = rest;
  TrainPair p{ids({0, 2}), ids({1, 3}), 1.0};
  one.push_back(p);
  p.weight = 0.5;
  two.push_back(p);
  two.push_back(p);
  auto g1 = m.compute_gradient(one), g2 = m.compute_gradient(two);
  EXPECT_NEAR(g1.weight_sum, g2.weight_sum, 1e-15);
  EXPECT_LT(max_abs_diff(g1.grad, g2.grad), 1e-13);
  EXPECT_NEAR(g1.loss, g2.loss, 1e-12);
}

TEST(Seq2SeqGradient, IndependentOfThreadCount) {
  auto m = toy();
  Rng rng(9);
  auto batch = random_batch(rng, 40);
  thread_cap().store(1);
  auto a = m.compute_gradient(batch);
  thread_cap().store(4);
  auto b = m.compute_gradient(batch);
  thread_cap().store(0);
  EXPECT_TRUE(same_params(a.grad, b.grad));
  EXPECT_EQ(a.loss, b.loss);
}

TEST(Seq2SeqGradient, RejectsBadBatches) {
  auto m = toy();
  EXPECT_THROW(m.compute_gradient({}), Error);
  EXPECT_THROW(m.compute_gradient({{ids({0}), ids({1}), 0.0}}), Error);
  EXPECT_THROW(m.compute_gradient({{ids({0}), ids({1}), std::nan("")}}), Error);
}

TEST(Seq2SeqTraining, RepeatedBatchLowersLoss) {
  auto m = toy(8);
  Rng rng(3);
  auto batch = random_batch(rng, 32);
  double first = m.train_batch(batch, 0.5, 0), last = first;
  for (int i = 1; i < 100; ++i) last = m.train_batch(batch, 0.5, static_cast<std::size_t>(i));
  EXPECT_LT(last, first);
}

TEST(Seq2SeqTraining, OverfitPairIsRecoveredByDecoding) {
  auto m = toy(8, 2);
  TrainPair p{ids({0, 1, 2}), ids({3, 2, 1, 0}), 1.0};
  double before = m.log_prob(p.x, p.y);
  for (int i = 0; i < 200; ++i) m.train_batch({p}, 0.5, static_cast<std::size_t>(i));
  EXPECT_GT(m.log_prob(p.x, p.y), before);
  auto max_len = Seq2SeqModel::default_max_len(p.x);
  EXPECT_EQ(m.beam_decode(p.x, 4, max_len).tokens, p.y);
  EXPECT_EQ(m.greedy_decode(p.x, max_len).tokens, p.y);
}

TEST(Seq2SeqTraining, NonFiniteStateIsATrainingError) {
  auto m = toy();
  m.params()[kProjW](0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(m.train_batch({{ids({0}), ids({1}), 1.0}}, 0.1, 7), TrainingError);
}

TEST(Seq2SeqDecoding, BeamOneIsGreedyAndWiderBeamsDominate) {
  Rng rng(4);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = toy(6, seed);
    for (auto& b : m.params().blocks) b *= 10.0;
    for (int t = 0; t < 20; ++t) {
      Sentence x;
      for (std::size_t k = 0, len = 1 + rng.below(4); k < len; ++k) x.push_back(static_cast<TokenId>(special::kCount + rng.below(3)));
      auto g = m.greedy_decode(x, 6);
      auto b1 = m.beam_decode(x, 1, 6);
      EXPECT_EQ(b1.tokens, g.tokens);
      EXPECT_NEAR(b1.log_prob, g.log_prob, 1e-12);
      auto b4 = m.beam_decode(x, 4, 6);
      EXPECT_GE(b4.log_prob, g.log_prob);
      EXPECT_NEAR(b4.log_prob, m.log_prob(x, b4.tokens), 1e-9);
      EXPECT_LE(b4.tokens.size(), 6u);
    }
  }
}

TEST(Seq2SeqDecoding, DecoderLmUsesDummySource) {
  auto m = toy();
  for (const auto& y : {ids({}), ids({1}), ids({3, 3, 0})}) {
    EXPECT_EQ(m.decoder_lm_log_prob(y), m.log_prob({special::kDummy}, y));
    EXPECT_EQ(m.decoder_lm_log_prob(y), m.decoder_lm_log_prob(y));
    EXPECT_LE(m.decoder_lm_log_prob(y), 0.0);
  }
}

TEST(Seq2SeqDecoding, TrainedDecoderLmPrefersRealSentences) {
  const auto& pair = testutil::small_cipher(0, 6000);
  auto vocab_y = build_vocab(pair.train_y, 100000, 1);
  auto vocab_x = build_vocab(pair.train_x, 100000, 1);
  Seq2SeqModel m(vocab_x, vocab_y, Seq2SeqHyper{.dim = 16, .seed = 3});
  std::vector<TrainPair> data;
  for (std::size_t i = 0; i < 1500; ++i) data.push_back({{special::kDummy}, vocab_y.encode(pair.train_y[i]), 1.0});
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t i = 0; i + 32 <= data.size(); i += 32)
      m.train_batch(std::vector<TrainPair>(data.begin() + static_cast<long>(i), data.begin() + static_cast<long>(i + 32)), 0.5, i);
  Rng rng(1);
  double real = 0, noise = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    auto y = vocab_y.encode(pair.dev_y[i]);
    Sentence r;
    for (std::size_t k = 0; k < y.size(); ++k) r.push_back(static_cast<TokenId>(special::kCount + rng.below(vocab_y.size() - special::kCount)));
    real += m.decoder_lm_log_prob(y);
    noise += m.decoder_lm_log_prob(r);
  }
  EXPECT_GT(real / 100, noise / 100);
}

TEST(Seq2SeqCheckpoint, RoundTripIsBitExact) {
  auto m = toy(5, 7);
  Rng rng(5);
  m.train_batch(random_batch(rng, 8), 0.3, 0);
  testutil::TempDir dir;
  m.save(dir.file("m.bin"));
  auto back = Seq2SeqModel::load(dir.file("m.bin"));
  EXPECT_TRUE(same_params(back.params(), m.params()));
  EXPECT_TRUE(back.target_vocab() == m.target_vocab());
  auto probes = random_batch(rng, 10);
  for (const auto& p : probes) EXPECT_EQ(back.log_prob(p.x, p.y), m.log_prob(p.x, p.y));
  write_lines(dir.file("junk.bin"), {"not a model"});
  EXPECT_THROW(Seq2SeqModel::load(dir.file("junk.bin")), Error);
}

#include <gtest/gtest.h>

#include <filesystem>

#include "test_util.hpp"
#include "unmt/trainer.hpp"

using namespace unmt;

namespace {

TrainingData small_data() {
  const auto& pair = testutil::small_cipher(2, 1500);
  TrainingData d;
  d.mono_x = pair.train_x;
  d.mono_y = pair.train_y;
  d.dev_x.assign(pair.dev_x.begin(), pair.dev_x.begin() + 20);
  d.dev_y.assign(pair.dev_y.begin(), pair.dev_y.begin() + 20);
  return d;
}

TrainerConfig small_config() {
  TrainerConfig c;
  c.embed.dim = 16;
  c.map.chains = 1;
  c.map.perturbations = 2;
  c.phrase.top_k = 5;
  c.smt.beam_size = 2;
  c.nmt.dim = 8;
  c.nmt.learning_rate = 0.2;
  c.batch_size = 16;
  c.sub_dataset_size = 48;
  c.beam_train = 1;
  c.beam_eval = 2;
  c.max_epochs = 2;
  c.patience = 5;
  c.seed = 7;
  return c;
}

std::vector<EpochRecord> bleu_history(std::initializer_list<double> sums) {
  std::vector<EpochRecord> h;
  int e = 0;
  for (double s : sums) h.push_back({e++, s / 2, s / 2, 1, 1, 0, 0});
  return h;
}

}  // namespace

TEST(Converged, PatienceOnSummedBleu) {
  EXPECT_FALSE(converged(bleu_history({1, 2, 3, 4, 5}), 2));
  EXPECT_TRUE(converged(bleu_history({3, 3, 3, 3}), 2));
  EXPECT_FALSE(converged(bleu_history({3}), 2));
  EXPECT_FALSE(converged({}, 1));
  EXPECT_TRUE(converged(bleu_history({1, 5, 4, 4}), 2));
  EXPECT_FALSE(converged(bleu_history({1, 5, 4, 6}), 2));
  EXPECT_TRUE(converged(bleu_history({1, 2, 3}), 10, 2));
  EXPECT_THROW(converged({}, 0), Error);
}

TEST(Trainer, ZeroEpochCapRunsOnlySmtInitialization) {
  auto cfg = small_config();
  cfg.max_epochs = 0;
  Trainer t(cfg, small_data());
  const auto& h = t.run();
  ASSERT_EQ(h.size(), 1u);
  EXPECT_EQ(h[0].epoch, 0);
  EXPECT_EQ(t.smt_generations(), 2 * cfg.sub_dataset_size);
  EXPECT_EQ(t.nmt_generations(), 0u);
  EXPECT_EQ(h[0].mean_weight_xy, 1.0);
  EXPECT_EQ(h[0].mean_weight_yx, 1.0);
}

TEST(Trainer, FollowsTheOuterLoopAndIsDeterministic) {
  auto cfg = small_config();
  Trainer a(cfg, small_data()), b(cfg, small_data());
  const auto& ha = a.run();
  ASSERT_EQ(ha.size(), 3u);
  for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].epoch, static_cast<int>(i));
  EXPECT_EQ(a.epoch(), 3);
  // Epoch 0 decodes with the phrase-based system, every later epoch with the models.
  EXPECT_EQ(a.smt_generations(), 2 * cfg.sub_dataset_size);
  EXPECT_EQ(a.nmt_generations(), 2 * 2 * cfg.sub_dataset_size);
  for (std::size_t i = 1; i < ha.size(); ++i) {
    EXPECT_GT(ha[i].mean_weight_xy, 0.0);
    EXPECT_LT(ha[i].mean_weight_xy, 1.0);
    EXPECT_LT(ha[i].mean_weight_yx, 1.0);
  }
  EXPECT_EQ(b.run(), ha);
}

TEST(Trainer, UniformModeTrainsWithUnitWeights) {
  auto cfg = small_config();
  cfg.mode = WeightMode::kUniform;
  cfg.max_epochs = 1;
  Trainer t(cfg, small_data());
  for (const auto& r : t.run()) {
    EXPECT_EQ(r.mean_weight_xy, 1.0);
    EXPECT_EQ(r.mean_weight_yx, 1.0);
  }
  const auto& res = t.resources();
  std::vector<std::pair<Sentence, Sentence>> pairs;
  for (std::size_t i = 0; i < 20; ++i) pairs.emplace_back(res.vocab_x.encode(small_data().mono_x[i]), res.vocab_y.encode(small_data().mono_y[i]));
  for (double w : t.weights_for(pairs, *res.lm_x, *res.lm_y, t.forward())) EXPECT_EQ(w, 1.0);
}

TEST(Trainer, WeightedTrainingMatchesExplicitWeightedBatches) {
  auto cfg = small_config();
  Trainer t(cfg, small_data());
  t.prepare();
  const auto& res = t.resources();
  std::vector<std::pair<Sentence, Sentence>> pairs;
  for (std::size_t i = 0; i < 32; ++i) pairs.emplace_back(res.vocab_x.encode(small_data().mono_x[i]), res.vocab_y.encode(small_data().mono_y[i]));
  auto w = t.weights_for(pairs, *res.lm_x, *res.lm_y, t.forward());
  ASSERT_EQ(w.size(), pairs.size());
  Seq2SeqModel a = t.forward(), b = t.forward();
  Rng r1(3), r2(3);
  t.train_direction(a, pairs, w, 1, 0.1, r1);
  // Same batches in the same order, built by hand.
  std::vector<std::size_t> starts = {0, 16};
  r2.shuffle(starts);
  for (std::size_t s : starts) {
    std::vector<TrainPair> batch;
    for (std::size_t i = s; i < s + 16; ++i) batch.push_back({pairs[i].first, pairs[i].second, w[i]});
    b.train_batch(batch, 0.1, 0);
  }
  for (std::size_t k = 0; k < kBlockCount; ++k) EXPECT_TRUE((a.params()[k].array() == b.params()[k].array()).all());
}

TEST(Trainer, CheckpointsEveryEpoch) {
  testutil::TempDir dir;
  auto cfg = small_config();
  cfg.max_epochs = 1;
  cfg.output_dir = dir.file("run");
  Trainer t(cfg, small_data());
  t.run();
  namespace fs = std::filesystem;
  for (int e : {0, 1}) {
    fs::path ep = fs::path(cfg.output_dir) / ("epoch_" + std::to_string(e));
    EXPECT_TRUE(fs::exists(ep / "forward.ckpt"));
    EXPECT_TRUE(fs::exists(ep / "backward.ckpt"));
    auto state = read_lines((ep / "state.txt").string());
    EXPECT_EQ(state.front(), "epoch=" + std::to_string(e));
  }
  auto fwd = Seq2SeqModel::load((fs::path(cfg.output_dir) / "epoch_1" / "forward.ckpt").string());
  Sentence x = t.resources().vocab_x.encode(small_data().dev_x[0]), y = t.resources().vocab_y.encode(small_data().dev_y[0]);
  EXPECT_EQ(fwd.log_prob(x, y), t.forward().log_prob(x, y));
  std::string csv;
  for (const auto& l : read_lines((fs::path(cfg.output_dir) / "history.csv").string())) csv += l + "\n";
  EXPECT_EQ(parse_curves(csv), to_curves(t.history()));
}

TEST(Trainer, FailuresNameTheEpochAndPhase) {
  auto cfg = small_config();
  cfg.nmt.learning_rate = 1e308;
  Trainer t(cfg, small_data());
  try {
    t.run();
    FAIL();
  } catch (const TrainingError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train failed"), std::string::npos) << msg;
  }
  auto bad = small_config();
  bad.embed.dim = 5000;
  Trainer u(bad, small_data());
  try {
    u.prepare();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("prepare failed"), std::string::npos);
  }
}

TEST(Trainer, RejectsInvalidSetups) {
  auto data = small_data();
  Trainer t(small_config(), data);
  EXPECT_THROW(t.run_epoch(), Error);
  data.dev_y.pop_back();
  EXPECT_THROW(Trainer(small_config(), data), Error);
  EXPECT_THROW(Trainer(small_config(), TrainingData{}), Error);
  auto cfg = small_config();
  cfg.passes = 0;
  EXPECT_THROW(Trainer(cfg, small_data()), Error);
  cfg = small_config();
  cfg.lr_decay = 0;
  EXPECT_THROW(Trainer(cfg, small_data()), Error);
}

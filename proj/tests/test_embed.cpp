#include <gtest/gtest.h>

#include "test_util.hpp"
#include "unmt/embed.hpp"

using namespace unmt;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(gen);
  return m;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index d, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(d, d, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

EmbeddingSpace random_space(const std::string& prefix, Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Eigen::MatrixXd m = gaussian(n, d, seed);
  normalize_rows(m);
  std::vector<std::string> words;
  for (Eigen::Index i = 0; i < n; ++i) words.push_back(prefix + std::to_string(i));
  return EmbeddingSpace(words, m);
}

std::vector<std::pair<int, int>> identity_pairs(std::size_t n) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(static_cast<int>(i), static_cast<int>(i));
  return out;
}

RankedLexicon as_lexicon(const CrossLingualMap& m, const EmbeddingSpace& ex, const EmbeddingSpace& ey) {
  RankedLexicon lex;
  for (const auto& e : m.induced) lex[ex.words()[static_cast<std::size_t>(e.x)]] = {ey.words()[static_cast<std::size_t>(e.y)]};
  return lex;
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

struct CipherSpaces {
  EmbeddingSpace ex, ey;
  WordPairs gold;
};

const CipherSpaces& cipher_spaces() {
  static const CipherSpaces s = [] {
    const auto& pair = testutil::small_cipher(0, 20000);
    EmbedOptions opt;
    return CipherSpaces{train_embeddings(pair.train_x, opt), train_embeddings(pair.train_y, opt), pair.gold};
  }();
  return s;
}

}  // namespace

TEST(TrainEmbeddings, InterchangeableTokensGetNearlyIdenticalVectors) {
  auto base = ToyLanguage().generate(2000, 4);
  std::map<std::string, std::size_t> freq;
  for (const auto& s : base)
    for (const auto& w : s) ++freq[w];
  auto target = std::max_element(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  std::vector<Words> corpus;
  for (const auto& s : base) {
    if (std::find(s.begin(), s.end(), target) == s.end()) {
      corpus.push_back(s);
      continue;
    }
    for (const char* sub : {"alpha", "beta"}) {
      Words t = s;
      std::replace(t.begin(), t.end(), target, std::string(sub));
      corpus.push_back(t);
    }
  }
  EmbedOptions opt;
  opt.dim = 30;
  auto e = train_embeddings(corpus, opt);
  double cos = e.row(e.index("alpha")).dot(e.row(e.index("beta")));
  EXPECT_GE(cos, 0.99);
}

TEST(TrainEmbeddings, OneDimensionalRowsAreSigns) {
  EmbedOptions opt;
  opt.dim = 1;
  auto e = train_embeddings(ToyLanguage().generate(500, 2), opt);
  for (Eigen::Index i = 0; i < e.matrix().rows(); ++i) EXPECT_NEAR(std::abs(e.matrix()(i, 0)), 1.0, 1e-12);
}

TEST(TrainEmbeddings, DeterministicUnitRowsOrderedByFrequency) {
  auto corpus = ToyLanguage().generate(800, 9);
  EmbedOptions opt;
  opt.dim = 16;
  auto a = train_embeddings(corpus, opt), b = train_embeddings(corpus, opt);
  EXPECT_TRUE(same(a.matrix(), b.matrix()));
  EXPECT_EQ(a.words(), b.words());
  for (Eigen::Index i = 0; i < a.matrix().rows(); ++i) EXPECT_NEAR(a.matrix().row(i).norm(), 1.0, 1e-12);
  for (std::size_t i = 1; i < a.counts().size(); ++i) EXPECT_GE(a.counts()[i - 1], a.counts()[i]);
}

TEST(TrainEmbeddings, RejectsDegenerateCorporaAndBadOptions) {
  EXPECT_THROW(train_embeddings({{"a", "a", "a"}}, EmbedOptions{}), Error);
  EmbedOptions opt;
  opt.dim = 50;
  EXPECT_THROW(train_embeddings({{"a", "b", "c"}}, opt), Error);
  opt.dim = 2;
  opt.window = 0;
  EXPECT_THROW(train_embeddings({{"a", "b", "c"}}, opt), Error);
}

TEST(EmbeddingSpace, SaveLoadRoundTrip) {
  auto e = random_space("w", 12, 5, 3);
  testutil::TempDir dir;
  e.save(dir.file("e.txt"));
  auto back = EmbeddingSpace::load(dir.file("e.txt"));
  EXPECT_EQ(back.words(), e.words());
  EXPECT_TRUE(same(back.matrix(), e.matrix()));
}

TEST(Procrustes, RecoversSyntheticRotation) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto ex = random_space("x", 200, 20, seed);
    Eigen::MatrixXd q = random_orthogonal(20, seed + 100);
    EmbeddingSpace ey(ex.words(), ex.matrix() * q.transpose());
    Eigen::MatrixXd m = procrustes(ex, ey, identity_pairs(ex.size()));
    EXPECT_LT((m - q).norm() / q.norm(), 1e-6) << "seed " << seed;
    EXPECT_LT((m.transpose() * m - Eigen::MatrixXd::Identity(20, 20)).norm(), 1e-6);
  }
}

TEST(Procrustes, IdentitySpacesGiveIdentityMap) {
  auto ex = random_space("x", 50, 8, 7);
  Eigen::MatrixXd m = procrustes(ex, ex, identity_pairs(ex.size()));
  EXPECT_LT((m - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Procrustes, SeedOrderDoesNotMatter) {
  auto ex = random_space("x", 60, 6, 1), ey = random_space("y", 60, 6, 2);
  auto seed = identity_pairs(40);
  auto shuffled = seed;
  Rng rng(5);
  rng.shuffle(shuffled);
  EXPECT_TRUE(same(procrustes(ex, ey, seed), procrustes(ex, ey, shuffled)));
  EXPECT_THROW(procrustes(ex, ey, {}), Error);
  EXPECT_THROW(procrustes(ex, ey, {{0, 60}}), Error);
}

TEST(Procrustes, MappingPreservesCosines) {
  auto ex = random_space("x", 80, 10, 4), ey = random_space("y", 80, 10, 5);
  CrossLingualMap map;
  map.M = procrustes(ex, ey, identity_pairs(30));
  Eigen::MatrixXd mapped = mapped_source(map, ex);
  for (Eigen::Index a = 0; a < 20; ++a)
    for (Eigen::Index b = a + 1; b < 20; ++b) {
      double before = ex.matrix().row(a).dot(ex.matrix().row(b));
      double after = mapped.row(a).dot(mapped.row(b)) / (mapped.row(a).norm() * mapped.row(b).norm());
      EXPECT_NEAR(after, before, 1e-9);
    }
}

TEST(Procrustes, NoiselessSyntheticLexiconIsPerfect) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto ex = random_space("x", 150, 16, seed);
    Eigen::MatrixXd q = random_orthogonal(16, seed + 50);
    // Target rows shuffled and renamed, so only the geometry links the two sides.
    std::vector<int> perm(150);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);
    Eigen::MatrixXd my(150, 16);
    std::vector<std::string> wy(150);
    WordPairs gold, seed_dict;
    for (int i = 0; i < 150; ++i) {
      my.row(perm[static_cast<std::size_t>(i)]) = ex.matrix().row(i) * q.transpose();
      wy[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = "y" + std::to_string(i);
      gold.emplace_back("x" + std::to_string(i), "y" + std::to_string(i));
    }
    EmbeddingSpace ey(wy, my);
    for (int i = 0; i < 30; ++i) seed_dict.push_back(gold[static_cast<std::size_t>(i)]);
    auto map = procrustes_map(ex, ey, seed_dict);
    EXPECT_EQ(lexicon_precision_at_k(translate_top_k(map, ex, ey, 1), gold, 1), 1.0) << "seed " << seed;
  }
}

TEST(SelfLearning, IdenticalSpacesInduceIdentity) {
  auto ex = random_space("w", 40, 8, 2);
  auto m = self_learning(ex, ex, identity_pairs(10), {.rounds = 3});
  ASSERT_EQ(m.induced.size(), 40u);
  for (const auto& e : m.induced) {
    EXPECT_EQ(e.x, e.y);
    EXPECT_NEAR(e.cosine, 1.0, 1e-12);
  }
}

TEST(SelfLearning, SingleRoundIsProcrustesThenInduction) {
  auto ex = random_space("x", 50, 6, 8), ey = random_space("y", 50, 6, 9);
  auto seed = identity_pairs(20);
  auto m = self_learning(ex, ey, seed, {.rounds = 1});
  CrossLingualMap ref;
  ref.M = procrustes(ex, ey, seed);
  auto induced = mutual_nearest_neighbors(mapped_source(ref, ex), ey, 5000);
  EXPECT_TRUE(same(m.M, ref.M));
  ASSERT_EQ(m.induced.size(), induced.size());
  for (std::size_t i = 0; i < induced.size(); ++i) {
    EXPECT_EQ(m.induced[i].x, induced[i].x);
    EXPECT_EQ(m.induced[i].y, induced[i].y);
  }
}

TEST(SelfLearning, MoreRoundsDoNotLowerCipherPrecisionOrMeanCosine) {
  const auto& s = cipher_spaces();
  std::vector<std::pair<int, int>> init;
  for (std::size_t i = 0; i < s.gold.size() && init.size() < 50; ++i) {
    int x = s.ex.find(s.gold[i].first), y = s.ey.find(s.gold[i].second);
    if (x >= 0 && y >= 0) init.emplace_back(x, y);
  }
  ASSERT_EQ(init.size(), 50u);
  double prev_cos = -1;
  double p1 = 0, p5 = 0;
  for (int r = 1; r <= 5; ++r) {
    auto m = self_learning(s.ex, s.ey, init, {.rounds = r});
    EXPECT_GE(m.mean_cosine(), prev_cos - 1e-12) << "rounds " << r;
    prev_cos = m.mean_cosine();
    double p = lexicon_precision_at_k(as_lexicon(m, s.ex, s.ey), s.gold, 1);
    if (r == 1) p1 = p;
    if (r == 5) p5 = p;
  }
  EXPECT_GE(p5, p1);
  EXPECT_GT(p5, 0.5);
}

TEST(SelfLearning, RejectsZeroRounds) {
  auto ex = random_space("x", 10, 3, 1);
  EXPECT_THROW(self_learning(ex, ex, identity_pairs(5), {.rounds = 0}), Error);
}

TEST(WordTranslationProb, ZeroLambdaIsUniform) {
  auto ex = random_space("x", 10, 4, 1), ey = random_space("y", 25, 4, 2);
  CrossLingualMap map;
  map.M = Eigen::MatrixXd::Identity(4, 4);
  for (double p : word_translation_prob(map, ex, ey, "x3", 0.0)) EXPECT_EQ(p, 1.0 / 25);
}

TEST(WordTranslationProb, TwoCandidateClosedForm) {
  Eigen::MatrixXd src(1, 2), tgt(2, 2);
  src << 1, 0;
  tgt << 1, 0, 0, 1;
  EmbeddingSpace ex({"s"}, src), ey({"a", "b"}, tgt);
  CrossLingualMap map;
  map.M = Eigen::MatrixXd::Identity(2, 2);
  auto p = word_translation_prob(map, ex, ey, "s", 30.0);
  // 1 / (1 + e^30)
  EXPECT_NEAR(p[1], 9.357622968840175e-14, 1e-24);
  EXPECT_NEAR(p[0], 1.0 - 9.357622968840175e-14, 1e-14);
}

TEST(WordTranslationProb, NormalizedAndOrderedLikeCosines) {
  auto ex = random_space("x", 100, 8, 11), ey = random_space("y", 60, 8, 12);
  CrossLingualMap map;
  map.M = random_orthogonal(8, 13);
  Eigen::MatrixXd mapped = mapped_source(map, ex);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    Eigen::VectorXd cos = ey.matrix() * mapped.row(static_cast<Eigen::Index>(i)).transpose();
    Eigen::Index best_cos;
    cos.maxCoeff(&best_cos);
    for (double lambda : {0.5, 5.0, 30.0}) {
      auto p = word_translation_prob(map, ex, ey, ex.words()[i], lambda);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
      EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), best_cos);
      for (std::size_t a = 0; a < 10; ++a) {
        if (cos(static_cast<Eigen::Index>(a)) < cos(static_cast<Eigen::Index>(a + 1))) {
          EXPECT_LE(p[a], p[a + 1]);
        }
      }
    }
  }
}

TEST(WordTranslationProb, RejectsUnknownWordAndNegativeLambda) {
  auto ex = random_space("x", 5, 3, 1);
  CrossLingualMap map;
  map.M = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(word_translation_prob(map, ex, ex, "nope", 1.0), Error);
  EXPECT_THROW(word_translation_prob(map, ex, ex, "x1", -1.0), Error);
}

TEST(CrossLingualMap, SaveLoadRoundTrip) {
  CrossLingualMap m;
  m.M = random_orthogonal(7, 3);
  testutil::TempDir dir;
  m.save(dir.file("m.txt"));
  EXPECT_TRUE(same(CrossLingualMap::load(dir.file("m.txt")).M, m.M));
}

TEST(UnsupervisedMap, CipherPairReachesUsefulPrecision) {
  const auto& s = cipher_spaces();
  auto m = unsupervised_map(s.ex, s.ey);
  EXPECT_LT((m.M.transpose() * m.M - Eigen::MatrixXd::Identity(m.M.rows(), m.M.cols())).norm(), 1e-6);
  EXPECT_GT(lexicon_precision_at_k(translate_top_k(m, s.ex, s.ey, 1), s.gold, 1), 0.5);
}

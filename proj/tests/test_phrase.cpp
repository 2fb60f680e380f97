#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "unmt/phrase.hpp"

using namespace unmt;

namespace {

EmbeddingSpace space(const std::vector<std::string>& words, std::uint64_t seed, Eigen::Index d = 6) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(words.size()), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = nd(gen);
  normalize_rows(m);
  return EmbeddingSpace(words, m);
}

CrossLingualMap identity_map(Eigen::Index d) {
  CrossLingualMap m;
  m.M = Eigen::MatrixXd::Identity(d, d);
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Small {
  std::vector<Words> cx = {{"a", "b", "c"}, {"a", "b"}, {"c", "a", "b"}, {"b", "c"}};
  std::vector<Words> cy = {{"p", "q", "r"}, {"p", "q"}, {"r", "p", "q"}, {"s", "r"}};
  EmbeddingSpace ex = space({"a", "b", "c"}, 1);
  EmbeddingSpace ey = space({"p", "q", "r", "s"}, 2);
};

}  // namespace

TEST(InferPhraseTable, UnigramRowsEqualWordTranslationProb) {
  Small s;
  CrossLingualMap map;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Random(6, 6));
  map.M = qr.householderQ() * Eigen::MatrixXd::Identity(6, 6);
  PhraseOptions opt;
  opt.max_len = 1;
  opt.top_k = s.ey.size();
  opt.lambda = 7.5;
  auto t = infer_phrase_table(map, s.ex, s.ey, s.cx, s.cy, opt);
  for (const auto& x : s.ex.words()) {
    auto p = word_translation_prob(map, s.ex, s.ey, x, opt.lambda);
    const auto* row = t.find({x});
    ASSERT_NE(row, nullptr);
    ASSERT_EQ(row->size(), s.ey.size());
    for (const auto& c : *row) EXPECT_NEAR(c.prob, p[static_cast<std::size_t>(s.ey.index(c.target[0]))], 1e-12);
  }
}

TEST(InferPhraseTable, RowsArePositiveSortedAndSubNormalized) {
  Small s;
  PhraseOptions opt;
  opt.top_k = 2;
  opt.min_count = 2;
  auto t = infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt);
  bool saw_bigram = false;
  for (const auto& [src, cands] : t.entries()) {
    ASSERT_FALSE(cands.empty());
    EXPECT_LE(cands.size(), 2u);
    double sum = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      EXPECT_GT(cands[i].prob, 0.0);
      EXPECT_EQ(cands[i].target.size(), src.size());
      if (i > 0) {
        EXPECT_GE(cands[i - 1].prob, cands[i].prob);
      }
      sum += cands[i].prob;
    }
    EXPECT_LE(sum, 1.0 + 1e-9);
    saw_bigram = saw_bigram || src.size() == 2;
  }
  EXPECT_TRUE(saw_bigram);
  // "a b" occurs three times, "b c" twice, "c a" once.
  EXPECT_NE(t.find({"a", "b"}), nullptr);
  EXPECT_NE(t.find({"b", "c"}), nullptr);
  EXPECT_EQ(t.find({"c", "a"}), nullptr);
}

TEST(InferPhraseTable, TopOneKeepsASingleCandidate) {
  Small s;
  PhraseOptions opt;
  opt.top_k = 1;
  opt.min_count = 1;
  auto t = infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt);
  for (const auto& [src, cands] : t.entries()) EXPECT_EQ(cands.size(), 1u);
}

TEST(InferPhraseTable, TiesBreakByTargetString) {
  Eigen::MatrixXd mx(1, 2), my(3, 2);
  mx << 1, 0;
  my << 0, 1, 0, 1, 1, 0;
  EmbeddingSpace ex({"s"}, mx), ey({"zz", "aa", "mm"}, my);
  PhraseOptions opt;
  opt.max_len = 1;
  auto row = *infer_phrase_table(identity_map(2), ex, ey, {}, {}, opt).find({"s"});
  ASSERT_EQ(row.size(), 3u);
  EXPECT_EQ(row[0].target, Words{"mm"});
  EXPECT_EQ(row[1].target, Words{"aa"});
  EXPECT_EQ(row[2].target, Words{"zz"});
}

TEST(InferPhraseTable, SkipsUnknownTokenPhrases) {
  std::string unk(special::kUnkToken);
  EmbeddingSpace ex = space({"a", unk, "b"}, 3), ey = space({"p", "q"}, 4);
  std::vector<Words> cx(6, Words{"a", unk, "b"});
  PhraseOptions opt;
  opt.min_count = 1;
  auto t = infer_phrase_table(identity_map(6), ex, ey, cx, std::vector<Words>(6, Words{"p", "q"}), opt);
  for (const auto& [src, cands] : t.entries()) EXPECT_EQ(std::find(src.begin(), src.end(), unk), src.end());
  EXPECT_NE(t.find({"a"}), nullptr);
}

TEST(InferPhraseTable, RejectsBadOptions) {
  Small s;
  PhraseOptions opt;
  opt.max_len = 0;
  EXPECT_THROW(infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt), Error);
  opt.max_len = 1;
  opt.top_k = 0;
  EXPECT_THROW(infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt), Error);
}

TEST(InferPhraseTable, DeterministicSerializationAndRoundTrip) {
  Small s;
  PhraseOptions opt;
  opt.min_count = 1;
  auto a = infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt);
  auto b = infer_phrase_table(identity_map(6), s.ex, s.ey, s.cx, s.cy, opt);
  testutil::TempDir dir;
  a.save(dir.file("a.tsv"));
  b.save(dir.file("b.tsv"));
  EXPECT_EQ(slurp(dir.file("a.tsv")), slurp(dir.file("b.tsv")));
  auto back = PhraseTable::load(dir.file("a.tsv"));
  EXPECT_EQ(back.entries(), a.entries());
  EXPECT_EQ(back.max_len(), 2);
  write_lines(dir.file("bad.tsv"), {"a\tb"});
  EXPECT_THROW(PhraseTable::load(dir.file("bad.tsv")), Error);
}

TEST(PhraseLogProb, LookupHitMissAndPurity) {
  PhraseTable t(2, 30.0);
  t.set({"a", "b"}, {{{"p", "q"}, 0.6}, {{"q", "p"}, 0.25}});
  EXPECT_NEAR(*t.log_prob({"a", "b"}, {"q", "p"}), std::log(0.25), 1e-15);
  EXPECT_FALSE(t.log_prob({"a", "b"}, {"p"}).has_value());
  EXPECT_FALSE(t.log_prob({"z"}, {"p"}).has_value());
  EXPECT_EQ(t.log_prob({"a", "b"}, {"p", "q"}), t.log_prob({"a", "b"}, {"p", "q"}));
  auto rev = t.reversed();
  ASSERT_EQ(rev.at({"p", "q"}).size(), 1u);
  EXPECT_EQ(rev.at({"p", "q"})[0].first, (Words{"a", "b"}));
}

TEST(InverseMap, TransposesAndSwapsPairs) {
  CrossLingualMap m;
  m.M = Eigen::MatrixXd::Random(4, 4);
  m.induced = {{1, 2, 0.5}};
  auto inv = inverse_map(m);
  EXPECT_TRUE((inv.M.array() == m.M.transpose().array()).all());
  EXPECT_EQ(inv.induced[0].x, 2);
  EXPECT_EQ(inv.induced[0].y, 1);
}

TEST(InferPhraseTable, CipherGoldIsTopCandidateForFrequentWords) {
  const auto& pair = testutil::small_cipher(0, 20000);
  auto ex = train_embeddings(pair.train_x, EmbedOptions{}), ey = train_embeddings(pair.train_y, EmbedOptions{});
  auto map = unsupervised_map(ex, ey);
  auto table = infer_phrase_table(map, ex, ey, pair.train_x, pair.train_y);
  std::map<std::string, std::string> gold(pair.gold.begin(), pair.gold.end());
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < ex.size() && i < 500; ++i) {
    const auto& w = ex.words()[i];
    ++total;
    const auto* row = table.find({w});
    if (row && !row->empty() && row->front().target == Words{gold.at(w)}) ++hits;
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(total), 0.9) << hits << " / " << total;
}

#pragma once

// Interpolated Kneser-Ney n-gram language model with a single absolute
// discount. Sentences are scored with one <bos> of left context and a final
// <eos>. The lowest level interpolates with the uniform distribution over all
// predictable tokens, so <unk> and unseen words keep positive mass.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <unordered_map>

#include "unmt/binary_io.hpp"
#include "unmt/corpus.hpp"

namespace unmt {

inline constexpr int kMaxLmOrder = 5;

struct NGramKey {
  std::array<TokenId, kMaxLmOrder> ids{};
  std::uint8_t len = 0;

  static NGramKey of(std::span<const TokenId> s) {
    NGramKey k;
    k.len = static_cast<std::uint8_t>(s.size());
    std::copy(s.begin(), s.end(), k.ids.begin());
    return k;
  }
  std::span<const TokenId> view() const { return {ids.data(), len}; }
  friend bool operator==(const NGramKey& a, const NGramKey& b) { return a.len == b.len && a.ids == b.ids; }
  friend bool operator<(const NGramKey& a, const NGramKey& b) {
    return std::lexicographical_compare(a.ids.begin(), a.ids.begin() + a.len, b.ids.begin(), b.ids.begin() + b.len);
  }
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ k.len;
    for (std::uint8_t i = 0; i < k.len; ++i) {
      h ^= static_cast<std::uint32_t>(k.ids[i]);
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

class NGramModel {
 public:
  // An untrained model assigns the uniform distribution.
  NGramModel(Vocabulary vocab, int order, double discount)
      : vocab_(std::move(vocab)), order_(order), discount_(discount), counts_(static_cast<std::size_t>(order) + 1),
        contexts_(static_cast<std::size_t>(order) + 1) {
    UNMT_CHECK(order >= 1 && order <= kMaxLmOrder, "lm: order must lie in [1, " << kMaxLmOrder << "], got " << order);
    UNMT_CHECK(discount > 0.0 && discount < 1.0, "lm: discount must lie in (0, 1), got " << discount);
  }

  int order() const { return order_; }
  double discount() const { return discount_; }
  const Vocabulary& vocab() const { return vocab_; }

  // <pad>, <bos> and <dummy> are never predicted.
  static bool predictable(TokenId id) { return id != special::kPad && id != special::kBos && id != special::kDummy; }
  std::size_t predictable_size() const { return vocab_.size() - 3; }

  std::uint32_t count(std::span<const TokenId> ngram) const {
    if (ngram.empty() || ngram.size() > static_cast<std::size_t>(order_)) return 0;
    const auto& table = counts_[ngram.size()];
    auto it = table.find(NGramKey::of(ngram));
    return it == table.end() ? 0 : it->second;
  }

  // P(word | history). Only the last order-1 tokens of history are used.
  double prob(std::span<const TokenId> history, TokenId word) const {
    if (history.size() > static_cast<std::size_t>(order_ - 1)) history = history.subspan(history.size() - static_cast<std::size_t>(order_ - 1));
    double p = 1.0 / static_cast<double>(predictable_size());
    std::array<TokenId, kMaxLmOrder> buf{};
    for (std::size_t k = 1; k <= history.size() + 1; ++k) {
      auto ctx = history.subspan(history.size() - (k - 1));
      const auto& stats = contexts_[k];
      auto cit = stats.find(NGramKey::of(ctx));
      if (cit == stats.end() || cit->second.total == 0) continue;
      std::copy(ctx.begin(), ctx.end(), buf.begin());
      buf[k - 1] = word;
      double c = count(std::span<const TokenId>(buf.data(), k));
      p = (std::max(c - discount_, 0.0) + discount_ * cit->second.types * p) / cit->second.total;
    }
    return p;
  }

  double log_prob(std::span<const TokenId> history, TokenId word) const { return std::log(prob(history, word)); }

  // Natural-log probability of the sentence followed by <eos>.
  double sentence_log_prob(const Sentence& s) const {
    std::vector<TokenId> hist;
    hist.reserve(s.size() + 2);
    hist.push_back(special::kBos);
    double lp = 0;
    for (TokenId w : s) {
      lp += log_prob(hist, w);
      hist.push_back(w);
    }
    lp += log_prob(hist, special::kEos);
    return lp;
  }

  // Returns P(. | history) over every vocabulary id (zero for unpredictable ids).
  std::vector<double> next_token_dist(std::span<const TokenId> history) const {
    std::vector<double> d(vocab_.size(), 0.0);
    for (std::size_t w = 0; w < d.size(); ++w)
      if (predictable(static_cast<TokenId>(w))) d[w] = prob(history, static_cast<TokenId>(w));
    return d;
  }

  void train(const std::vector<Sentence>& corpus);

  void save(const std::string& path) const;
  static NGramModel load(const std::string& path);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::uint32_t types = 0;
  };

  void rebuild_contexts() {
    for (std::size_t k = 1; k <= static_cast<std::size_t>(order_); ++k) {
      auto& stats = contexts_[k];
      stats.clear();
      for (const auto& [key, c] : counts_[k]) {
        auto ctx = NGramKey::of(key.view().first(k - 1));
        auto& st = stats[ctx];
        st.total += c;
        st.types += 1;
      }
    }
  }

  Vocabulary vocab_;
  int order_;
  double discount_;
  // counts_[k]: adjusted counts of k-grams. Highest order and <bos>-initial
  // n-grams keep raw counts; other lower orders hold left-continuation counts.
  std::vector<std::unordered_map<NGramKey, std::uint32_t, NGramKeyHash>> counts_;
  std::vector<std::unordered_map<NGramKey, ContextStats, NGramKeyHash>> contexts_;
};

inline void NGramModel::train(const std::vector<Sentence>& corpus) {
  UNMT_CHECK(!corpus.empty(), "lm: empty corpus");
  const auto n = static_cast<std::size_t>(order_);
  for (auto& t : counts_) t.clear();

  // Raw counts of every order.
  std::vector<std::unordered_map<NGramKey, std::uint32_t, NGramKeyHash>> raw(n + 1);
  std::vector<TokenId> padded;
  for (const auto& s : corpus) {
    padded.clear();
    padded.push_back(special::kBos);
    for (TokenId w : s) {
      UNMT_CHECK(w >= 0 && static_cast<std::size_t>(w) < vocab_.size() && predictable(w),
                 "lm: token id " << w << " cannot appear in training text");
      padded.push_back(w);
    }
    padded.push_back(special::kEos);
    for (std::size_t end = 1; end < padded.size(); ++end)
      for (std::size_t k = 1; k <= n && k <= end + 1; ++k) {
        std::size_t start = end + 1 - k;
        if (start == 0 && k == 1) continue;  // the lone <bos> unigram
        ++raw[k][NGramKey::of(std::span<const TokenId>(padded.data() + start, k))];
      }
  }

  counts_[n] = raw[n];
  for (std::size_t k = 1; k < n; ++k) {
    auto& adj = counts_[k];
    for (const auto& [key, c] : raw[k])
      if (key.ids[0] == special::kBos) adj[key] = c;
    for (const auto& [key, c] : raw[k + 1]) {
      if (c == 0) continue;
      auto suffix = NGramKey::of(key.view().subspan(1));
      if (suffix.ids[0] == special::kBos) continue;
      ++adj[suffix];
    }
  }
  rebuild_contexts();
}

inline void NGramModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  UNMT_CHECK(out, "cannot write " << path);
  io::put_magic(out, "UNMTNGRM");
  io::put<std::uint32_t>(out, 1);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(order_));
  io::put<double>(out, discount_);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
  for (const auto& t : vocab_.tokens()) io::put_string(out, t);
  for (std::size_t k = 1; k <= static_cast<std::size_t>(order_); ++k) {
    std::vector<std::pair<NGramKey, std::uint32_t>> sorted(counts_[k].begin(), counts_[k].end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    io::put<std::uint64_t>(out, sorted.size());
    for (const auto& [key, c] : sorted) {
      for (std::size_t i = 0; i < k; ++i) io::put<std::int32_t>(out, key.ids[i]);
      io::put<std::uint32_t>(out, c);
    }
  }
}

inline NGramModel NGramModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  UNMT_CHECK(in, "cannot open " << path);
  io::expect_magic(in, "UNMTNGRM", path);
  auto version = io::get<std::uint32_t>(in);
  UNMT_CHECK(version == 1, path << ": unsupported lm version " << version);
  auto order = static_cast<int>(io::get<std::uint32_t>(in));
  auto discount = io::get<double>(in);
  auto vsize = io::get<std::uint32_t>(in);
  Vocabulary v;
  for (std::uint32_t i = 0; i < vsize; ++i) {
    auto tok = io::get_string(in);
    if (i < static_cast<std::uint32_t>(special::kCount)) {
      UNMT_CHECK(tok == v.token(static_cast<TokenId>(i)), path << ": special token mismatch");
    } else {
      v.add(tok);
    }
  }
  UNMT_CHECK(v.size() == vsize, path << ": duplicate vocabulary entries");
  NGramModel m(std::move(v), order, discount);
  for (std::size_t k = 1; k <= static_cast<std::size_t>(order); ++k) {
    auto entries = io::get<std::uint64_t>(in);
    auto& table = m.counts_[k];
    table.reserve(entries);
    for (std::uint64_t e = 0; e < entries; ++e) {
      NGramKey key;
      key.len = static_cast<std::uint8_t>(k);
      for (std::size_t i = 0; i < k; ++i) key.ids[i] = io::get<std::int32_t>(in);
      table[key] = io::get<std::uint32_t>(in);
    }
  }
  m.rebuild_contexts();
  return m;
}

inline NGramModel train_ngram(const Vocabulary& vocab, const std::vector<Sentence>& corpus, int order, double discount) {
  NGramModel m(vocab, order, discount);
  m.train(corpus);
  return m;
}

inline double perplexity(const NGramModel& model, const std::vector<Sentence>& corpus) {
  UNMT_CHECK(!corpus.empty(), "perplexity: empty corpus");
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    total += model.sentence_log_prob(s);
    tokens += s.size() + 1;
  }
  return std::exp(-total / static_cast<double>(tokens));
}

}  // namespace unmt

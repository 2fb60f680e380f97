#pragma once

// Synthetic language pairs for desk-scale experiments: language X is language
// Y under a token bijection, local reordering and optional token drops.

#include <map>
#include <set>

#include "unmt/corpus.hpp"
#include "unmt/rng.hpp"

namespace unmt {

struct CipherSpec {
  std::uint64_t seed = 1;
  int reorder_window = 0;
  double drop_rate = 0.0;
  // Y token -> X token. Built from the corpus when left empty.
  std::map<std::string, std::string> substitution;
  std::size_t dev_size = 500;
  std::size_t test_size = 500;
  // Digit/punctuation tokens map to themselves when the substitution is built here.
  bool keep_shared_symbols = true;
  // Each token type carries a fixed drift, so X reorders consistently like a
  // natural language. When false every sentence is shuffled independently.
  bool systematic_reorder = true;
};

struct CipherPair {
  std::vector<Words> train_x, train_y;
  std::vector<Words> dev_x, dev_y;
  std::vector<Words> test_x, test_y;
  // (x word, y word) sorted by x word.
  std::vector<std::pair<std::string, std::string>> gold;
};

// Random lowercase word forms, distinct from each other and from `avoid`.
inline std::vector<std::string> random_word_forms(std::size_t n, Rng& rng, const std::set<std::string>& avoid) {
  static constexpr std::string_view kCons = "bcdfghjklmnpqrstvwxz";
  static constexpr std::string_view kVow = "aeiouy";
  std::set<std::string> used(avoid);
  std::vector<std::string> out;
  while (out.size() < n) {
    std::size_t syl = 1 + rng.below(3);
    std::string w;
    for (std::size_t s = 0; s < syl; ++s) {
      w += kCons[rng.below(kCons.size())];
      w += kVow[rng.below(kVow.size())];
      if (rng.bernoulli(0.4)) w += kCons[rng.below(kCons.size())];
    }
    if (w.size() < 2 || !used.insert(w).second) continue;
    out.push_back(w);
  }
  return out;
}

// Tokens made only of ASCII digits and punctuation are shared between the two
// languages, like numerals and punctuation in real language pairs.
inline bool is_shared_symbol(const std::string& t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u < 0x80 && (std::isdigit(u) || std::ispunct(u));
  });
}

// Bijection over the corpus token types: shared symbols map to themselves,
// every other token to a fresh random word form.
inline std::map<std::string, std::string> make_substitution(const std::vector<Words>& corpus, std::uint64_t seed,
                                                            bool keep_shared_symbols = true) {
  std::set<std::string> types;
  for (const auto& s : corpus) types.insert(s.begin(), s.end());
  UNMT_CHECK(types.size() >= 2, "cipher: vocabulary of " << types.size() << " token(s) is too small for a bijection");
  Rng rng(seed);
  auto forms = random_word_forms(types.size(), rng, types);
  std::map<std::string, std::string> sub;
  std::size_t i = 0;
  for (const auto& t : types) {
    if (keep_shared_symbols && is_shared_symbol(t)) {
      sub.emplace(t, t);
    } else {
      sub.emplace(t, forms[i++]);
    }
  }
  return sub;
}

// Sorts positions by i + U(0, window + 1); every token moves at most `window`
// places.
inline std::vector<std::size_t> local_permutation(std::size_t n, int window, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (window <= 0 || n < 2) return order;
  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = static_cast<double>(i) + rng.uniform() * (window + 1);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

// Sorts positions by i + drift(token) with drift in [0, window + 1); every
// token moves at most `window` places.
inline std::vector<std::size_t> drift_permutation(const Words& y, const std::map<std::string, double>& drift) {
  std::vector<std::size_t> order(y.size());
  std::vector<double> key(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    order[i] = i;
    auto it = drift.find(y[i]);
    key[i] = static_cast<double>(i) + (it == drift.end() ? 0.0 : it->second);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

// Drift per token type, drawn in sorted type order.
inline std::map<std::string, double> make_drift(const std::map<std::string, std::string>& substitution, int window, std::uint64_t seed) {
  Rng rng(seed ^ 0xD21F7A5EULL);
  std::map<std::string, double> drift;
  for (const auto& [y, x] : substitution) drift.emplace(y, rng.uniform() * (window + 1));
  return drift;
}

inline Words encipher(const Words& y, const CipherSpec& spec, Rng& rng, const std::map<std::string, double>* drift = nullptr) {
  auto perm = drift && spec.reorder_window > 0 ? drift_permutation(y, *drift) : local_permutation(y.size(), spec.reorder_window, rng);
  Words x;
  x.reserve(y.size());
  for (std::size_t p : perm) {
    auto it = spec.substitution.find(y[p]);
    UNMT_CHECK(it != spec.substitution.end(), "cipher: token '" << y[p] << "' has no substitute");
    x.push_back(it->second);
  }
  if (spec.drop_rate > 0 && x.size() > 1) {
    Words kept;
    for (auto& w : x)
      if (!rng.bernoulli(spec.drop_rate)) kept.push_back(std::move(w));
    if (kept.empty()) kept.push_back(x.front());
    x = std::move(kept);
  }
  return x;
}

inline CipherPair generate_cipher_pair(const std::vector<Words>& corpus_y, CipherSpec spec) {
  UNMT_CHECK(!corpus_y.empty(), "cipher: empty corpus");
  UNMT_CHECK(spec.reorder_window >= 0, "cipher: reorder_window must be >= 0");
  UNMT_CHECK(spec.drop_rate >= 0.0 && spec.drop_rate <= 0.2, "cipher: drop_rate must lie in [0, 0.2]");
  std::vector<Words> corpus;
  for (const auto& s : corpus_y)
    if (!s.empty()) corpus.push_back(s);
  UNMT_CHECK(corpus.size() >= spec.dev_size + spec.test_size + 2,
             "cipher: corpus of " << corpus.size() << " sentences cannot hold dev/test splits");
  if (spec.substitution.empty()) {
    spec.substitution = make_substitution(corpus, spec.seed, spec.keep_shared_symbols);
  } else {
    std::set<std::string> images;
    for (const auto& [k, v] : spec.substitution)
      UNMT_CHECK(images.insert(v).second, "cipher: substitution is not injective at '" << v << "'");
  }

  std::map<std::string, double> drift;
  if (spec.systematic_reorder) drift = make_drift(spec.substitution, spec.reorder_window, spec.seed);
  const auto* dp = spec.systematic_reorder ? &drift : nullptr;
  Rng rng(spec.seed ^ 0x5EEDC1F3ULL);
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);

  CipherPair out;
  std::size_t pos = 0;
  for (; pos < spec.dev_size; ++pos) {
    out.dev_y.push_back(corpus[idx[pos]]);
    out.dev_x.push_back(encipher(corpus[idx[pos]], spec, rng, dp));
  }
  for (; pos < spec.dev_size + spec.test_size; ++pos) {
    out.test_y.push_back(corpus[idx[pos]]);
    out.test_x.push_back(encipher(corpus[idx[pos]], spec, rng, dp));
  }
  std::size_t half = pos + (idx.size() - pos) / 2;
  for (; pos < half; ++pos) out.train_y.push_back(corpus[idx[pos]]);
  for (; pos < idx.size(); ++pos) out.train_x.push_back(encipher(corpus[idx[pos]], spec, rng, dp));

  for (const auto& [y, x] : spec.substitution) out.gold.emplace_back(x, y);
  std::sort(out.gold.begin(), out.gold.end());
  return out;
}

}  // namespace unmt

#pragma once

// Phrase translation table inferred from mapped embeddings. Unigram rows are
// the full softmax over target words; longer phrases are embedded as the
// renormalized mean of their token vectors and scored against frequent target
// n-grams of the same length.

#include <optional>

#include "unmt/corpus.hpp"
#include "unmt/embed.hpp"

namespace unmt {

struct PhraseCandidate {
  Words target;
  double prob = 0;
  friend bool operator==(const PhraseCandidate&, const PhraseCandidate&) = default;
};

struct PhraseOptions {
  int max_len = 2;
  std::size_t top_k = 20;
  double lambda = 30.0;
  // Multi-token phrases must occur at least this often to be listed.
  std::size_t min_count = 5;
};

class PhraseTable {
 public:
  PhraseTable() = default;
  PhraseTable(int max_len, double lambda) : max_len_(max_len), lambda_(lambda) {}

  int max_len() const { return max_len_; }
  double lambda() const { return lambda_; }
  const std::map<Words, std::vector<PhraseCandidate>>& entries() const { return entries_; }

  void set(Words source, std::vector<PhraseCandidate> cands) { entries_[std::move(source)] = std::move(cands); }

  const std::vector<PhraseCandidate>* find(const Words& source) const {
    auto it = entries_.find(source);
    return it == entries_.end() ? nullptr : &it->second;
  }

  // Log of the stored probability, or nullopt when the pair is not listed.
  std::optional<double> log_prob(const Words& source, const Words& target) const {
    const auto* c = find(source);
    if (!c) return std::nullopt;
    for (const auto& e : *c)
      if (e.target == target) return std::log(e.prob);
    return std::nullopt;
  }

  // Target phrase -> (source phrase, log prob) over every stored pair,
  // sorted by descending log prob, then source phrase.
  std::map<Words, std::vector<std::pair<Words, double>>> reversed() const {
    std::map<Words, std::vector<std::pair<Words, double>>> out;
    for (const auto& [src, cands] : entries_)
      for (const auto& c : cands) out[c.target].emplace_back(src, std::log(c.prob));
    for (auto& [t, v] : out)
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    return out;
  }

  // TSV "src<TAB>tgt<TAB>prob", grouped by source, descending probability.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    UNMT_CHECK(out, "cannot write " << path);
    for (const auto& [src, cands] : entries_)
      for (const auto& c : cands) out << join(src) << '\t' << join(c.target) << '\t' << format_double(c.prob) << '\n';
  }

  static PhraseTable load(const std::string& path, double lambda = 30.0) {
    PhraseTable t(1, lambda);
    std::size_t lineno = 0;
    for (const auto& line : read_lines(path)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_char(line, '\t');
      UNMT_CHECK(f.size() == 3, path << ":" << lineno << ": expected 3 tab-separated fields");
      auto src = split_ws(f[0]);
      auto tgt = split_ws(f[1]);
      double p = std::strtod(f[2].c_str(), nullptr);
      UNMT_CHECK(!src.empty() && !tgt.empty() && p > 0 && p <= 1, path << ":" << lineno << ": malformed entry");
      t.max_len_ = std::max({t.max_len_, static_cast<int>(src.size()), static_cast<int>(tgt.size())});
      t.entries_[src].push_back({tgt, p});
    }
    return t;
  }

 private:
  int max_len_ = 1;
  double lambda_ = 30.0;
  std::map<Words, std::vector<PhraseCandidate>> entries_;
};

// N-grams of length n occurring at least min_count times, sorted.
inline std::vector<Words> frequent_ngrams(const std::vector<Words>& corpus, std::size_t n, std::size_t min_count) {
  std::map<Words, std::size_t> counts;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Words(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))];
  std::vector<Words> out;
  for (const auto& [g, c] : counts)
    if (c >= min_count) out.push_back(g);
  return out;
}

namespace detail {

// Renormalized mean of the rows for `phrase`; nullopt if a token is missing.
inline std::optional<Eigen::VectorXd> phrase_vector(const EmbeddingSpace& space, const Words& phrase) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(space.dim());
  for (const auto& w : phrase) {
    int i = space.find(w);
    if (i < 0) return std::nullopt;
    v += space.matrix().row(i).transpose();
  }
  double n = v.norm();
  if (n > 0) v /= n;
  return v;
}

inline std::vector<PhraseCandidate> top_candidates(const Eigen::VectorXd& logp, const std::vector<Words>& targets, std::size_t k) {
  std::vector<std::size_t> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(kk), order.end(), [&](std::size_t a, std::size_t b) {
    double la = logp(static_cast<Eigen::Index>(a)), lb = logp(static_cast<Eigen::Index>(b));
    return la != lb ? la > lb : targets[a] < targets[b];
  });
  std::vector<PhraseCandidate> out;
  for (std::size_t i = 0; i < kk; ++i) {
    double p = std::exp(logp(static_cast<Eigen::Index>(order[i])));
    if (p > 0) out.push_back({targets[order[i]], p});
  }
  return out;
}

}  // namespace detail

// Builds phi(target | source) for source phrases of the source space. Source
// and target corpora supply the multi-token phrase inventories.
inline PhraseTable infer_phrase_table(const CrossLingualMap& map, const EmbeddingSpace& ex, const EmbeddingSpace& ey,
                                      const std::vector<Words>& corpus_x, const std::vector<Words>& corpus_y,
                                      const PhraseOptions& opt = {}) {
  UNMT_CHECK(opt.max_len >= 1, "phrase: max_len must be >= 1");
  UNMT_CHECK(opt.top_k >= 1, "phrase: top_k must be >= 1");
  UNMT_CHECK(opt.lambda >= 0, "phrase: lambda must be >= 0");
  PhraseTable table(opt.max_len, opt.lambda);
  const std::string unk(special::kUnkToken);

  for (int len = 1; len <= opt.max_len; ++len) {
    std::vector<Words> sources, targets;
    if (len == 1) {
      for (const auto& w : ex.words())
        if (w != unk) sources.push_back({w});
      for (const auto& w : ey.words()) targets.push_back({w});
    } else {
      for (auto& g : frequent_ngrams(corpus_x, static_cast<std::size_t>(len), opt.min_count))
        if (std::find(g.begin(), g.end(), unk) == g.end()) sources.push_back(std::move(g));
      for (auto& g : frequent_ngrams(corpus_y, static_cast<std::size_t>(len), opt.min_count))
        if (std::find(g.begin(), g.end(), unk) == g.end()) targets.push_back(std::move(g));
    }
    // Target matrix and mapped source vectors.
    std::vector<Words> kept_targets;
    std::vector<Eigen::VectorXd> tv;
    for (auto& t : targets)
      if (auto v = detail::phrase_vector(ey, t)) {
        kept_targets.push_back(std::move(t));
        tv.push_back(std::move(*v));
      }
    if (kept_targets.empty()) continue;
    Eigen::MatrixXd tm(static_cast<Eigen::Index>(tv.size()), ey.dim());
    for (std::size_t i = 0; i < tv.size(); ++i) tm.row(static_cast<Eigen::Index>(i)) = tv[i].transpose();

    std::vector<std::vector<PhraseCandidate>> rows(sources.size());
    std::vector<char> ok(sources.size(), 0);
    parallel_for(sources.size(), [&](std::size_t s) {
      auto v = detail::phrase_vector(ex, sources[s]);
      if (!v) return;
      Eigen::VectorXd mapped = map.M * *v;
      rows[s] = detail::top_candidates(translation_log_probs(mapped, tm, opt.lambda), kept_targets, opt.top_k);
      ok[s] = 1;
    });
    for (std::size_t s = 0; s < sources.size(); ++s)
      if (ok[s] && !rows[s].empty()) table.set(std::move(sources[s]), std::move(rows[s]));
  }
  return table;
}

// The inverse of an orthogonal map, for building the opposite-direction table.
inline CrossLingualMap inverse_map(const CrossLingualMap& map) {
  CrossLingualMap inv;
  inv.M = map.M.transpose();
  for (const auto& e : map.induced) inv.induced.push_back({e.y, e.x, e.cosine});
  return inv;
}

// Rank-ordered target words per single-token source entry.
inline RankedLexicon unigram_lexicon(const PhraseTable& table) {
  RankedLexicon out;
  for (const auto& [src, cands] : table.entries()) {
    if (src.size() != 1) continue;
    auto& list = out[src[0]];
    for (const auto& c : cands)
      if (c.target.size() == 1) list.push_back(c.target[0]);
  }
  return out;
}

}  // namespace unmt

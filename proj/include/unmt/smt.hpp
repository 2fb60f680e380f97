#pragma once

// Noisy-channel phrase-based decoder. Given a sentence y it searches for the
// x maximising tm * sum log phi(y_i | x_i) + lm * log P(x), plus an unknown
// word penalty and a distortion penalty. Translation options come from the
// reversed phrase table; <unk> is always available for a single position.

#include <limits>
#include <unordered_map>

#include "unmt/lm.hpp"
#include "unmt/phrase.hpp"

namespace unmt {

struct DecoderConfig {
  std::size_t beam_size = 8;
  int distortion_limit = 3;
  double distortion_weight = -0.5;
  double unk_penalty = -1.0;
  double lm_weight = 1.0;
  double tm_weight = 1.0;
  // Options kept per source span, best phi first. Zero keeps all.
  std::size_t max_options = 20;

  void validate() const {
    UNMT_CHECK(beam_size >= 1, "smt: beam_size must be >= 1");
    UNMT_CHECK(distortion_limit >= 0, "smt: distortion_limit must be >= 0");
    UNMT_CHECK(distortion_weight <= 0, "smt: distortion_weight must be <= 0");
    UNMT_CHECK(unk_penalty <= 0, "smt: unk_penalty must be <= 0");
    UNMT_CHECK(lm_weight > 0 && tm_weight > 0, "smt: lm_weight and tm_weight must be > 0");
  }
};

// One phrase of a derivation: y[start, start + len) rendered as `output`.
struct Segment {
  std::size_t start = 0, len = 0;
  Words output;
  bool unk = false;
};

struct FeatureScores {
  double tm = 0;          // sum of log phi
  double lm = 0;          // log P(x) including </s>
  double distortion = 0;  // sum of jump distances
  std::size_t unks = 0;
  double total = 0;
};

struct DecodeResult {
  Words output;
  double score = 0;
  std::vector<Segment> derivation;
};

inline int jump_distance(long start, long prev_end) { return static_cast<int>(std::abs(start - prev_end - 1)); }

// Recomputes every feature of a derivation from the table and LM.
inline FeatureScores score_derivation(const Words& y, const std::vector<Segment>& derivation, const PhraseTable& table,
                                      const NGramModel& lm, const DecoderConfig& cfg) {
  FeatureScores f;
  long prev_end = -1;
  std::vector<TokenId> hist = {special::kBos};
  for (const auto& seg : derivation) {
    UNMT_CHECK(seg.start + seg.len <= y.size() && seg.len >= 1, "smt: segment out of range");
    f.distortion += jump_distance(static_cast<long>(seg.start), prev_end);
    prev_end = static_cast<long>(seg.start + seg.len) - 1;
    if (seg.unk) {
      ++f.unks;
    } else {
      Words src(y.begin() + static_cast<long>(seg.start), y.begin() + static_cast<long>(seg.start + seg.len));
      auto lp = table.log_prob(seg.output, src);
      UNMT_CHECK(lp.has_value(), "smt: derivation uses a pair missing from the table");
      f.tm += *lp;
    }
    for (const auto& w : seg.output) {
      TokenId id = lm.vocab().id(w);
      f.lm += lm.log_prob(hist, id);
      hist.push_back(id);
    }
  }
  f.lm += lm.log_prob(hist, special::kEos);
  f.total = cfg.tm_weight * f.tm + cfg.lm_weight * f.lm + cfg.distortion_weight * f.distortion +
            cfg.unk_penalty * static_cast<double>(f.unks);
  return f;
}

class NoisyChannelDecoder {
 public:
  // `table` holds phi(y | x) keyed by x; `lm` scores x.
  NoisyChannelDecoder(const PhraseTable& table, const NGramModel& lm, DecoderConfig cfg)
      : table_(table), lm_(lm), cfg_(std::move(cfg)), reversed_(table.reversed()) {
    cfg_.validate();
    if (cfg_.max_options > 0)
      for (auto& [k, v] : reversed_)
        if (v.size() > cfg_.max_options) v.resize(cfg_.max_options);
  }

  const DecoderConfig& config() const { return cfg_; }

  // Runs the reordering search and a monotone search and returns the better
  // result; the monotone search always completes.
  DecodeResult decode(const Words& y) const {
    if (y.empty()) return {};
    auto mono = *search(y, 0);
    if (cfg_.distortion_limit == 0) return mono;
    auto r = search(y, cfg_.distortion_limit);
    return r && r->score > mono.score ? *r : mono;
  }

 private:
  struct Option {
    std::size_t start, len;
    Words output;
    std::vector<TokenId> ids;
    double tm;  // log phi, zero for <unk>
    bool unk;
  };

  struct Hyp {
    std::string coverage;  // '0'/'1' per position
    std::vector<TokenId> history;
    long prev_end = -1;
    std::size_t covered = 0;
    double score = 0;
    double future = 0;
    long back = -1;
    const Option* option = nullptr;
  };

  std::vector<Option> options_for(const Words& y) const {
    std::vector<Option> opts;
    const std::string unk(special::kUnkToken);
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t len = 1; len <= static_cast<std::size_t>(table_.max_len()) && i + len <= y.size(); ++len) {
        Words span(y.begin() + static_cast<long>(i), y.begin() + static_cast<long>(i + len));
        auto it = reversed_.find(span);
        if (it == reversed_.end()) continue;
        for (const auto& [x, lp] : it->second) {
          Option o{i, len, x, {}, lp, false};
          for (const auto& w : x) o.ids.push_back(lm_.vocab().id(w));
          opts.push_back(std::move(o));
        }
      }
      opts.push_back({i, 1, {unk}, {special::kUnk}, 0.0, true});
    }
    return opts;
  }

  double option_cost(const Option& o) const {
    double s = o.unk ? cfg_.unk_penalty : cfg_.tm_weight * o.tm;
    std::vector<TokenId> hist;
    for (TokenId id : o.ids) {
      s += cfg_.lm_weight * lm_.log_prob(hist, id);
      hist.push_back(id);
    }
    return s;
  }

  // best[i][j]: estimated best score for covering y[i, j) in isolation.
  std::vector<std::vector<double>> future_costs(std::size_t n, const std::vector<Option>& opts) const {
    const double neg = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> fc(n + 1, std::vector<double>(n + 1, neg));
    for (const auto& o : opts) fc[o.start][o.start + o.len] = std::max(fc[o.start][o.start + o.len], option_cost(o));
    for (std::size_t width = 2; width <= n; ++width)
      for (std::size_t i = 0; i + width <= n; ++i)
        for (std::size_t k = i + 1; k < i + width; ++k) fc[i][i + width] = std::max(fc[i][i + width], fc[i][k] + fc[k][i + width]);
    return fc;
  }

  // Translation estimate of the uncovered spans plus the jump back to the
  // leftmost gap.
  double future_of(const std::string& cov, long prev_end, const std::vector<std::vector<double>>& fc) const {
    double f = 0;
    auto gap = cov.find('0');
    if (gap != std::string::npos && static_cast<long>(gap) <= prev_end)
      f += cfg_.distortion_weight * jump_distance(static_cast<long>(gap), prev_end);
    std::size_t i = 0;
    while (i < cov.size()) {
      if (cov[i] == '1') {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < cov.size() && cov[j] == '0') ++j;
      f += fc[i][j];
      i = j;
    }
    return f;
  }

  // Whether the uncovered positions can still all be reached one at a time
  // with every jump inside the limit. Visiting the leftmost reachable gap
  // first settles most states; the rest get a depth-first search that gives
  // up optimistically after `budget` expansions (exact for short sentences).
  bool completable(std::string& cov, long prev_end, int limit, std::unordered_map<std::string, bool>& memo) const {
    if (completes_leftmost_first(cov, prev_end, limit)) return true;
    std::size_t budget = 200;
    return search_completion(cov, prev_end, limit, memo, budget);
  }

  static bool completes_leftmost_first(std::string cov, long prev_end, int limit) {
    for (;;) {
      long pick = -1;
      bool any = false;
      for (std::size_t s = 0; s < cov.size(); ++s) {
        if (cov[s] == '1') continue;
        any = true;
        if (jump_distance(static_cast<long>(s), prev_end) <= limit) {
          pick = static_cast<long>(s);
          break;
        }
      }
      if (!any) return true;
      if (pick < 0) return false;
      cov[static_cast<std::size_t>(pick)] = '1';
      prev_end = pick;
    }
  }

  bool search_completion(std::string& cov, long prev_end, int limit, std::unordered_map<std::string, bool>& memo,
                         std::size_t& budget) const {
    auto key = cov + '#' + std::to_string(prev_end);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (budget == 0) return true;
    --budget;
    bool ok = true;
    for (std::size_t s = 0; s < cov.size(); ++s) {
      if (cov[s] == '1') continue;
      ok = false;
      if (jump_distance(static_cast<long>(s), prev_end) > limit) continue;
      cov[s] = '1';
      bool sub = search_completion(cov, static_cast<long>(s), limit, memo, budget);
      cov[s] = '0';
      if (sub) {
        ok = true;
        break;
      }
    }
    if (budget > 0) memo.emplace(std::move(key), ok);
    return ok;
  }

  std::optional<DecodeResult> search(const Words& y, int limit) const {
    const std::size_t n = y.size();
    auto opts = options_for(y);
    auto fc = future_costs(n, opts);
    std::vector<std::vector<const Option*>> by_start(n);
    for (const auto& o : opts) by_start[o.start].push_back(&o);
    std::unordered_map<std::string, bool> memo;

    std::vector<Hyp> arena;
    std::vector<std::vector<long>> stacks(n + 1);
    std::vector<std::unordered_map<std::string, long>> recombine(n + 1);
    Hyp root;
    root.coverage.assign(n, '0');
    root.history = {special::kBos};
    root.future = future_of(root.coverage, -1, fc);
    arena.push_back(root);
    stacks[0].push_back(0);

    auto better = [&](long a, long b) {
      double sa = arena[static_cast<std::size_t>(a)].score + arena[static_cast<std::size_t>(a)].future;
      double sb = arena[static_cast<std::size_t>(b)].score + arena[static_cast<std::size_t>(b)].future;
      return sa != sb ? sa > sb : a < b;
    };
    const auto ctx = static_cast<std::size_t>(std::max(lm_.order() - 1, 0));

    for (std::size_t k = 0; k < n; ++k) {
      auto& stack = stacks[k];
      std::sort(stack.begin(), stack.end(), better);
      if (stack.size() > cfg_.beam_size) stack.resize(cfg_.beam_size);
      for (long hi : stack) {
        for (std::size_t s = 0; s < n; ++s) {
          if (arena[static_cast<std::size_t>(hi)].coverage[s] == '1') continue;
          if (jump_distance(static_cast<long>(s), arena[static_cast<std::size_t>(hi)].prev_end) > limit) continue;
          for (const Option* o : by_start[s]) {
            const Hyp& h = arena[static_cast<std::size_t>(hi)];
            bool free = true;
            for (std::size_t p = s; p < s + o->len; ++p) free = free && h.coverage[p] == '0';
            if (!free) continue;
            Hyp nh;
            nh.coverage = h.coverage;
            for (std::size_t p = s; p < s + o->len; ++p) nh.coverage[p] = '1';
            nh.prev_end = static_cast<long>(s + o->len) - 1;
            if (!completable(nh.coverage, nh.prev_end, limit, memo)) continue;
            nh.covered = h.covered + o->len;
            double lm = 0;
            std::vector<TokenId> hist = h.history;
            for (TokenId id : o->ids) {
              lm += lm_.log_prob(hist, id);
              hist.push_back(id);
            }
            if (hist.size() > ctx) hist.erase(hist.begin(), hist.end() - static_cast<long>(ctx));
            nh.history = std::move(hist);
            nh.score = h.score + (o->unk ? cfg_.unk_penalty : cfg_.tm_weight * o->tm) + cfg_.lm_weight * lm +
                       cfg_.distortion_weight * jump_distance(static_cast<long>(s), h.prev_end);
            nh.future = future_of(nh.coverage, nh.prev_end, fc);
            nh.back = hi;
            nh.option = o;
            // Hypotheses agreeing on coverage, LM context and last position
            // have identical futures; keep the better one.
            std::string key = nh.coverage + '#' + std::to_string(nh.prev_end);
            for (TokenId id : nh.history) key += ',' + std::to_string(id);
            auto& table = recombine[nh.covered];
            auto it = table.find(key);
            if (it != table.end()) {
              auto& old = arena[static_cast<std::size_t>(it->second)];
              if (nh.score > old.score) {
                old = std::move(nh);
              }
              continue;
            }
            arena.push_back(std::move(nh));
            long id = static_cast<long>(arena.size()) - 1;
            table.emplace(std::move(key), id);
            stacks[arena.back().covered].push_back(id);
          }
        }
      }
    }

    long best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (long hi : stacks[n]) {
      const Hyp& h = arena[static_cast<std::size_t>(hi)];
      double s = h.score + cfg_.lm_weight * lm_.log_prob(h.history, special::kEos);
      if (s > best_score) {
        best_score = s;
        best = hi;
      }
    }
    if (best < 0) return std::nullopt;
    DecodeResult r;
    r.score = best_score;
    for (long hi = best; arena[static_cast<std::size_t>(hi)].option; hi = arena[static_cast<std::size_t>(hi)].back) {
      const Option* o = arena[static_cast<std::size_t>(hi)].option;
      r.derivation.push_back({o->start, o->len, o->output, o->unk});
    }
    std::reverse(r.derivation.begin(), r.derivation.end());
    for (const auto& seg : r.derivation) r.output.insert(r.output.end(), seg.output.begin(), seg.output.end());
    return r;
  }

  const PhraseTable& table_;
  const NGramModel& lm_;
  DecoderConfig cfg_;
  std::map<Words, std::vector<std::pair<Words, double>>> reversed_;
};

inline DecodeResult decode_noisy_channel(const Words& y, const PhraseTable& table, const NGramModel& lm_x, const DecoderConfig& cfg) {
  UNMT_CHECK(!y.empty(), "smt: cannot decode an empty sentence");
  return NoisyChannelDecoder(table, lm_x, cfg).decode(y);
}

// A training pair for one translation direction: `source` is the model input,
// `target` the output.
struct SyntheticPair {
  Words source, target;
  double weight = 1.0;
  friend bool operator==(const SyntheticPair&, const SyntheticPair&) = default;
};

// Decodes a pseudo-source for every real sentence; order is preserved and
// every pair carries weight 1.
inline std::vector<SyntheticPair> generate_initial_synthetic(const std::vector<Words>& real, const PhraseTable& table,
                                                             const NGramModel& lm_source, const DecoderConfig& cfg) {
  UNMT_CHECK(!real.empty(), "smt: empty input corpus");
  NoisyChannelDecoder dec(table, lm_source, cfg);
  std::vector<SyntheticPair> out(real.size());
  parallel_for(real.size(), [&](std::size_t i) {
    out[i].target = real[i];
    out[i].source = real[i].empty() ? Words{} : dec.decode(real[i]).output;
  });
  return out;
}

// TSV "source<TAB>target<TAB>weight".
inline void save_synthetic(const std::string& path, const std::vector<SyntheticPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  UNMT_CHECK(out, "cannot write " << path);
  for (const auto& p : pairs) out << join(p.source) << '\t' << join(p.target) << '\t' << format_double(p.weight) << '\n';
}

inline std::vector<SyntheticPair> load_synthetic(const std::string& path) {
  std::vector<SyntheticPair> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_char(line, '\t');
    UNMT_CHECK(f.size() == 3, path << ":" << lineno << ": expected 3 tab-separated fields");
    out.push_back({split_ws(f[0]), split_ws(f[1]), std::strtod(f[2].c_str(), nullptr)});
  }
  return out;
}

}  // namespace unmt

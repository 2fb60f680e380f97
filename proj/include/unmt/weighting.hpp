#pragma once

// Synthetic-pair weights. For a pair (x, y) with a real target y and a
// generated source x, the raw log-weight is
//   log P(y) - log P(y; theta) + log P(x) + log P(y | x; theta)
// with P(y), P(x) from n-gram LMs and P(y; theta) from the forward model's
// decoder fed a dummy source. Training weights are sigmoid(raw - batch mean).

#include "unmt/lm.hpp"
#include "unmt/seq2seq.hpp"

namespace unmt {

enum class WeightMode { kWeighted, kUniform };

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "weighted") return WeightMode::kWeighted;
  if (s == "uniform") return WeightMode::kUniform;
  throw Error("unknown weighting mode '" + s + "' (expected weighted or uniform)");
}

inline std::string to_string(WeightMode m) { return m == WeightMode::kWeighted ? "weighted" : "uniform"; }

struct WeightedPair {
  Sentence x, y;
  double log_py = 0;        // target LM
  double log_py_model = 0;  // decoder as LM
  double log_px = 0;        // source LM
  double log_pyx = 0;       // forward model
  double log_w_raw = 0;
  double w_star = 1.0;
};

struct WeightComponents {
  double log_py, log_py_model, log_px, log_pyx, log_w_raw;
};

inline WeightComponents raw_log_weight(const Sentence& x, const Sentence& y, const NGramModel& lm_x, const NGramModel& lm_y,
                                       const Seq2SeqModel& forward) {
  WeightComponents c{};
  c.log_py = lm_y.sentence_log_prob(y);
  c.log_py_model = forward.decoder_lm_log_prob(y);
  c.log_px = lm_x.sentence_log_prob(x);
  c.log_pyx = forward.log_prob(x, y);
  c.log_w_raw = c.log_py - c.log_py_model + c.log_px + c.log_pyx;
  return c;
}

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

inline std::vector<double> normalize_weights(const std::vector<double>& log_weights) {
  UNMT_CHECK(!log_weights.empty(), "normalize_weights: empty list");
  for (std::size_t i = 0; i < log_weights.size(); ++i)
    UNMT_CHECK(std::isfinite(log_weights[i]), "normalize_weights: non-finite log-weight at index " << i);
  double mean = 0;
  for (double v : log_weights) mean += v;
  mean /= static_cast<double>(log_weights.size());
  // The sigmoid rounds to 0 or 1 in double precision beyond |z| ~ 37 and
  // ~745; clamping keeps every weight strictly inside (0, 1).
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  std::vector<double> out;
  out.reserve(log_weights.size());
  for (double v : log_weights) out.push_back(std::clamp(sigmoid(v - mean), lo, hi));
  return out;
}

// Pairs are (generated x, real y); `forward` models x -> y.
inline std::vector<WeightedPair> weigh_batch(const std::vector<std::pair<Sentence, Sentence>>& pairs, const NGramModel& lm_x,
                                             const NGramModel& lm_y, const Seq2SeqModel& forward, WeightMode mode) {
  UNMT_CHECK(!pairs.empty(), "weigh_batch: empty batch");
  std::vector<WeightedPair> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].x = pairs[i].first;
    out[i].y = pairs[i].second;
  }
  if (mode == WeightMode::kUniform) return out;
  UNMT_CHECK(lm_x.vocab().size() == forward.source_vocab().size() && lm_y.vocab().size() == forward.target_vocab().size(),
             "weigh_batch: language models and translation model use different vocabularies");
  parallel_for(out.size(), [&](std::size_t i) {
    auto c = raw_log_weight(out[i].x, out[i].y, lm_x, lm_y, forward);
    out[i].log_py = c.log_py;
    out[i].log_py_model = c.log_py_model;
    out[i].log_px = c.log_px;
    out[i].log_pyx = c.log_pyx;
    out[i].log_w_raw = c.log_w_raw;
  });
  std::vector<double> raw;
  raw.reserve(out.size());
  for (const auto& p : out) raw.push_back(p.log_w_raw);
  auto w = normalize_weights(raw);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].w_star = w[i];
  return out;
}

// TSV rows "x, y, logPy, logPy_model, logPx, logPyx, w_star".
inline std::string weight_dump_line(const WeightedPair& p, const Vocabulary& vx, const Vocabulary& vy) {
  std::ostringstream os;
  os << join(vx.decode(p.x)) << '\t' << join(vy.decode(p.y)) << '\t' << format_double(p.log_py) << '\t'
     << format_double(p.log_py_model) << '\t' << format_double(p.log_px) << '\t' << format_double(p.log_pyx) << '\t'
     << format_double(p.w_star);
  return os.str();
}

}  // namespace unmt

#pragma once

// Corpus BLEU, lexicon precision@k and iteration-curve CSV output.

#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "unmt/common.hpp"

namespace unmt {

struct BleuReport {
  double score = 0;
  std::vector<double> precisions;  // p1..pN after smoothing
  std::vector<std::size_t> matches, totals;
  double brevity_penalty = 0;
  std::size_t hyp_length = 0, ref_length = 0;
  bool smoothed = false;

  // Field order: bleu, p1..pN, bp, hyp_len, ref_len, smoothed.
  std::string to_string() const {
    std::ostringstream os;
    os << "{bleu: " << format_double(score);
    for (std::size_t n = 0; n < precisions.size(); ++n) os << ", p" << n + 1 << ": " << format_double(precisions[n]);
    os << ", bp: " << format_double(brevity_penalty) << ", hyp_len: " << hyp_length << ", ref_len: " << ref_length
       << ", smoothed: " << (smoothed ? "true" : "false") << "}";
    return os.str();
  }
};

namespace detail {

template <typename Tok>
std::map<std::vector<Tok>, std::size_t> ngram_counts(const std::vector<Tok>& s, std::size_t n) {
  std::map<std::vector<Tok>, std::size_t> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<Tok>(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))];
  return out;
}

}  // namespace detail

// Corpus-level BLEU with clipped n-gram counts and a single reference per
// hypothesis. A zero match count for n >= 2 is replaced by add-one smoothing
// of that order's matches and totals.
template <typename Tok>
BleuReport bleu(const std::vector<std::vector<Tok>>& hyps, const std::vector<std::vector<Tok>>& refs, std::size_t max_n = 4) {
  UNMT_CHECK(hyps.size() == refs.size(),
             "bleu: " << hyps.size() << " hypotheses but " << refs.size() << " references");
  UNMT_CHECK(max_n >= 1, "bleu: max_n must be >= 1");
  BleuReport r;
  r.matches.assign(max_n, 0);
  r.totals.assign(max_n, 0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    r.hyp_length += hyps[s].size();
    r.ref_length += refs[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      auto hc = detail::ngram_counts(hyps[s], n);
      auto rc = detail::ngram_counts(refs[s], n);
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        r.matches[n - 1] += std::min(c, it == rc.end() ? std::size_t{0} : it->second);
        r.totals[n - 1] += c;
      }
    }
  }
  r.precisions.assign(max_n, 0.0);
  if (r.hyp_length == 0 || r.matches[0] == 0) {
    for (std::size_t n = 0; n < max_n; ++n)
      r.precisions[n] = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    r.brevity_penalty = r.hyp_length == 0 ? 0.0 : std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
    if (r.hyp_length > r.ref_length) r.brevity_penalty = 1.0;
    r.score = 0.0;
    return r;
  }
  double log_sum = 0;
  for (std::size_t n = 0; n < max_n; ++n) {
    double m = static_cast<double>(r.matches[n]);
    double t = static_cast<double>(r.totals[n]);
    if (n > 0 && r.matches[n] == 0) {
      m += 1;
      t += 1;
      r.smoothed = true;
    }
    r.precisions[n] = m / t;
    log_sum += std::log(r.precisions[n]);
  }
  double ratio = static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length);
  r.brevity_penalty = r.hyp_length > r.ref_length ? 1.0 : std::exp(1.0 - ratio);
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return r;
}

// Induced dictionary: source word -> ranked target candidates.
using RankedLexicon = std::map<std::string, std::vector<std::string>>;
using WordPairs = std::vector<std::pair<std::string, std::string>>;

// Fraction of gold source words for which some gold target is among the
// induced top-k candidates.
inline double lexicon_precision_at_k(const RankedLexicon& induced, const WordPairs& gold, std::size_t k) {
  UNMT_CHECK(k >= 1, "precision@k: k must be >= 1");
  UNMT_CHECK(!gold.empty(), "precision@k: empty gold dictionary");
  std::map<std::string, std::set<std::string>> gold_map;
  for (const auto& [s, t] : gold) gold_map[s].insert(t);
  std::size_t hits = 0;
  for (const auto& [s, targets] : gold_map) {
    auto it = induced.find(s);
    if (it == induced.end()) continue;
    std::size_t lim = std::min(k, it->second.size());
    for (std::size_t i = 0; i < lim; ++i)
      if (targets.count(it->second[i])) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(gold_map.size());
}

struct CurveRow {
  int epoch = 0;
  std::string direction;
  double dev_bleu = 0;
  double mean_weight = 0;
  double train_loss = 0;
  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

inline constexpr std::string_view kCurveHeader = "epoch,direction,dev_bleu,mean_weight,train_loss";

inline std::string emit_curves(const std::vector<CurveRow>& rows) {
  UNMT_CHECK(!rows.empty(), "emit_curves: empty history");
  std::ostringstream os;
  os << kCurveHeader << '\n';
  for (const auto& r : rows)
    os << r.epoch << ',' << r.direction << ',' << format_double(r.dev_bleu) << ',' << format_double(r.mean_weight) << ','
       << format_double(r.train_loss) << '\n';
  return os.str();
}

inline std::vector<CurveRow> parse_curves(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  UNMT_CHECK(std::getline(is, line) && line == kCurveHeader, "curves: missing header '" << kCurveHeader << "'");
  std::vector<CurveRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_char(line, ',');
    UNMT_CHECK(f.size() == 5, "curves:" << lineno << ": expected 5 fields");
    CurveRow r;
    r.epoch = std::stoi(f[0]);
    r.direction = f[1];
    r.dev_bleu = std::strtod(f[2].c_str(), nullptr);
    r.mean_weight = std::strtod(f[3].c_str(), nullptr);
    r.train_loss = std::strtod(f[4].c_str(), nullptr);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace unmt

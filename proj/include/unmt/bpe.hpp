#pragma once

// Byte-pair-encoding subword segmentation. Non-final pieces of a token carry
// the "@@" continuation marker, so joining marked pieces restores the token.

#include <map>
#include <set>

#include "unmt/corpus.hpp"

namespace unmt {

inline constexpr std::string_view kBpeMarker = "@@";

struct BpeMergeTable {
  std::vector<std::pair<std::string, std::string>> merges;

  void save(const std::string& path) const {
    std::vector<std::string> lines;
    for (const auto& [l, r] : merges) lines.push_back(l + " " + r);
    write_lines(path, lines);
  }

  static BpeMergeTable load(const std::string& path) {
    BpeMergeTable t;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
      ++n;
      auto parts = split_char(line, ' ');
      UNMT_CHECK(parts.size() == 2 && !parts[0].empty() && !parts[1].empty(),
                 path << ":" << n << ": expected 'left right'");
      t.merges.emplace_back(parts[0], parts[1]);
    }
    return t;
  }
};

namespace detail {

inline void merge_symbols(std::vector<std::string>& syms, const std::string& l, const std::string& r) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
      out.push_back(l + r);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

}  // namespace detail

// Greedy most-frequent-pair merging over the corpus word types. Ties go to the
// lexicographically smallest pair.
inline BpeMergeTable learn_bpe(const std::vector<Words>& corpus, std::size_t num_merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus)
    for (const auto& w : line) ++word_counts[w];

  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freq;
  for (const auto& [w, c] : word_counts) {
    words.push_back(utf8_chars(w));
    freq.push_back(c);
  }

  BpeMergeTable table;
  for (std::size_t m = 0; m < num_merges; ++m) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (std::size_t i = 0; i < words.size(); ++i)
      for (std::size_t k = 0; k + 1 < words[i].size(); ++k) pairs[{words[i][k], words[i][k + 1]}] += freq[i];
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    table.merges.push_back(best->first);
    for (auto& w : words) detail::merge_symbols(w, best->first.first, best->first.second);
  }
  return table;
}

inline std::vector<std::string> apply_bpe_token(const std::string& token, const BpeMergeTable& table) {
  auto syms = utf8_chars(token);
  for (const auto& [l, r] : table.merges) {
    if (syms.size() < 2) break;
    detail::merge_symbols(syms, l, r);
  }
  for (std::size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += kBpeMarker;
  return syms;
}

inline Words apply_bpe(const Words& tokens, const BpeMergeTable& table) {
  Words out;
  for (const auto& t : tokens) {
    auto pieces = apply_bpe_token(t, table);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

inline Words undo_bpe(const Words& pieces) {
  Words out;
  std::string cur;
  for (const auto& p : pieces) {
    if (p.size() > kBpeMarker.size() && p.ends_with(kBpeMarker)) {
      cur += p.substr(0, p.size() - kBpeMarker.size());
    } else {
      cur += p;
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace unmt

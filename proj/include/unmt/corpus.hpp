#pragma once

// Tokenization and vocabularies.

#include <cctype>
#include <map>
#include <unordered_map>

#include "unmt/common.hpp"

namespace unmt {

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Returns the number of bytes of the UTF-8 sequence starting at s[i], or 0 if
// the sequence is malformed (overlong forms and surrogates included).
inline std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char c = byte(i);
  if (c < 0x80) return 1;
  std::size_t len;
  std::uint32_t cp;
  if ((c & 0xE0) == 0xC0) {
    len = 2;
    cp = c & 0x1F;
  } else if ((c & 0xF0) == 0xE0) {
    len = 3;
    cp = c & 0x0F;
  } else if ((c & 0xF8) == 0xF0) {
    len = 4;
    cp = c & 0x07;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    if ((byte(i + k) & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (byte(i + k) & 0x3F);
  }
  static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

// Splits valid UTF-8 into code-point strings; throws DecodeError otherwise.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = utf8_sequence_length(s, i);
    if (len == 0) throw DecodeError("invalid UTF-8 at byte " + std::to_string(i));
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

// Lowercases ASCII letters, splits ASCII punctuation into standalone tokens and
// splits on whitespace. Non-ASCII code points pass through unchanged.
inline std::vector<std::string> tokenize(std::string_view line) {
  for (std::size_t i = 0; i < line.size();) {
    std::size_t len = utf8_sequence_length(line, i);
    if (len == 0) throw DecodeError("invalid UTF-8 at byte " + std::to_string(i));
    i += len;
  }
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : line) {
    auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return tokens;
}

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kDummy = 4;
inline constexpr TokenId kCount = 5;
inline constexpr std::string_view kUnkToken = "<unk>";
}  // namespace special

class Vocabulary {
 public:
  Vocabulary() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "<dummy>"}) add(s);
  }

  static bool is_special(TokenId id) { return id >= 0 && id < special::kCount; }

  TokenId add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? special::kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(TokenId id) const {
    UNMT_CHECK(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), "token id " << id << " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  Sentence encode(const Words& words) const {
    Sentence out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }

  Words decode(const Sentence& ids) const {
    Words out;
    out.reserve(ids.size());
    for (TokenId i : ids) out.push_back(token(i));
    return out;
  }

  void save(const std::string& path) const { write_lines(path, tokens_); }

  static Vocabulary load(const std::string& path) {
    auto lines = read_lines(path);
    Vocabulary v;
    UNMT_CHECK(lines.size() >= special::kCount, path << ": vocabulary lacks special tokens");
    for (TokenId i = 0; i < special::kCount; ++i)
      UNMT_CHECK(lines[static_cast<std::size_t>(i)] == v.tokens_[static_cast<std::size_t>(i)],
                 path << ": line " << i + 1 << " must be " << v.tokens_[static_cast<std::size_t>(i)]);
    for (std::size_t i = special::kCount; i < lines.size(); ++i) {
      UNMT_CHECK(!v.contains(lines[i]), path << ": duplicate token '" << lines[i] << "'");
      v.add(lines[i]);
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Keeps the most frequent tokens (ties broken lexicographically) with count at
// least min_count, up to max_size entries including the specials.
inline Vocabulary build_vocab(const std::vector<Words>& corpus, std::size_t max_size, std::size_t min_count) {
  UNMT_CHECK(!corpus.empty(), "build_vocab: empty corpus");
  UNMT_CHECK(max_size > static_cast<std::size_t>(special::kCount),
             "build_vocab: max_size must exceed the " << special::kCount << " special tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (const auto& w : line) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, c] : ranked) {
    if (v.size() >= max_size) break;
    if (c < min_count) break;
    v.add(tok);
  }
  return v;
}

inline std::vector<Words> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<Words> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(tokenize(l));
  return out;
}

// Whitespace-split lines without further normalization (for pre-tokenized files).
inline std::vector<Words> split_lines(const std::vector<std::string>& lines) {
  std::vector<Words> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(split_ws(l));
  return out;
}

inline std::vector<std::string> join_lines(const std::vector<Words>& corpus) {
  std::vector<std::string> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(join(s));
  return out;
}

inline std::vector<Sentence> encode_corpus(const Vocabulary& v, const std::vector<Words>& corpus) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(v.encode(s));
  return out;
}

}  // namespace unmt

#pragma once

// A small generative "natural" language used as the monolingual Y corpus in
// desk experiments. Sentences follow a phrase-structure grammar; content words
// carry topics and selectional preferences so that every word has its own
// distributional profile.

#include <array>
#include <cmath>
#include <set>

#include "unmt/cipher.hpp"

namespace unmt {

struct ToyLanguageOptions {
  std::uint64_t seed = 7;
  std::size_t nouns = 60;
  std::size_t verbs = 30;
  std::size_t adjectives = 20;
  std::size_t adverbs = 10;
  std::size_t numerals = 30;
  std::size_t topics = 8;
};

class ToyLanguage {
 public:
  explicit ToyLanguage(const ToyLanguageOptions& opt = {}) : opt_(opt) {
    Rng rng(opt.seed);
    std::set<std::string> reserved = {"the", "a", "this", "every", "some", "in", "on", "with",
                                      "near", "from", "for", "and", "but", "not", ".", ",", "?"};
    auto forms = random_word_forms(opt.nouns + opt.verbs + opt.adjectives + opt.adverbs, rng, reserved);
    std::size_t k = 0;
    auto take = [&](std::size_t n) {
      std::vector<std::string> v(forms.begin() + static_cast<long>(k), forms.begin() + static_cast<long>(k + n));
      k += n;
      return v;
    };
    nouns_ = take(opt.nouns);
    verbs_ = take(opt.verbs);
    adjs_ = take(opt.adjectives);
    advs_ = take(opt.adverbs);

    auto topics_for = [&](std::size_t n) {
      std::vector<std::size_t> t(n);
      for (auto& x : t) x = rng.below(opt.topics);
      return t;
    };
    noun_topic_ = topics_for(nouns_.size());
    verb_topic_ = topics_for(verbs_.size());
    adj_topic_ = topics_for(adjs_.size());

    auto pick_subset = [&](std::size_t pool, std::size_t m) {
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < m; ++i) s.push_back(rng.below(pool));
      return s;
    };
    for (std::size_t v = 0; v < verbs_.size(); ++v) {
      verb_objects_.push_back(pick_subset(nouns_.size(), 8));
      verb_adverbs_.push_back(pick_subset(advs_.size(), 3));
      verb_preps_.push_back(pick_subset(kPreps.size(), 2));
    }
    for (std::size_t i = 0; i < opt.numerals; ++i) {
      numerals_.push_back(std::to_string(i + 2));
      numeral_nouns_.push_back(pick_subset(nouns_.size(), 5));
    }
    for (std::size_t n = 0; n < nouns_.size(); ++n) {
      noun_adjs_.push_back(pick_subset(adjs_.size(), 4));
      noun_verbs_.push_back(pick_subset(verbs_.size(), 6));
    }
  }

  std::vector<Words> generate(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<Words> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sentence(rng));
    return out;
  }

  // Nouns, verbs, adjectives and adverbs.
  std::set<std::string> content_words() const {
    std::set<std::string> s;
    for (const auto* v : {&nouns_, &verbs_, &adjs_, &advs_}) s.insert(v->begin(), v->end());
    return s;
  }

 private:
  static constexpr std::array<const char*, 5> kDets = {"the", "a", "this", "every", "some"};
  static constexpr std::array<const char*, 5> kPreps = {"in", "on", "with", "near", "from"};

  static double zipf(std::size_t rank) { return 1.0 / std::pow(static_cast<double>(rank) + 2.0, 0.9); }

  std::size_t pick_topical(Rng& rng, const std::vector<std::size_t>& topic_of, std::size_t topic) const {
    std::vector<double> w(topic_of.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = zipf(i) * (topic_of[i] == topic ? 6.0 : 1.0);
    return rng.categorical(w);
  }

  std::size_t pick_from(Rng& rng, const std::vector<std::size_t>& prefs, const std::vector<std::size_t>& topic_of,
                        std::size_t topic, double pref_prob) const {
    if (rng.bernoulli(pref_prob)) return prefs[rng.below(prefs.size())];
    return pick_topical(rng, topic_of, topic);
  }

  void noun_phrase(Rng& rng, std::size_t noun, Words& out) const {
    if (!numerals_.empty() && rng.bernoulli(0.12)) {
      std::size_t num = rng.below(numerals_.size());
      noun = numeral_nouns_[num][rng.below(numeral_nouns_[num].size())];
      out.push_back(numerals_[num]);
    } else {
      out.emplace_back(kDets[rng.categorical({4, 3, 1, 0.5, 1})]);
    }
    if (rng.bernoulli(0.4)) {
      std::size_t adj = noun_adjs_[noun][rng.below(noun_adjs_[noun].size())];
      if (rng.bernoulli(0.3)) adj = pick_topical(rng, adj_topic_, noun_topic_[noun]);
      out.push_back(adjs_[adj]);
    }
    out.push_back(nouns_[noun]);
  }

  void clause(Rng& rng, std::size_t topic, Words& out) const {
    std::size_t subj = pick_topical(rng, noun_topic_, topic);
    noun_phrase(rng, subj, out);
    std::size_t verb = pick_from(rng, noun_verbs_[subj], verb_topic_, topic, 0.5);
    if (rng.bernoulli(0.1)) out.emplace_back("not");
    out.push_back(verbs_[verb]);
    double r = rng.uniform();
    if (r < 0.65) {
      std::size_t obj = pick_from(rng, verb_objects_[verb], noun_topic_, topic, 0.6);
      noun_phrase(rng, obj, out);
    } else if (r < 0.85) {
      out.push_back(advs_[verb_adverbs_[verb][rng.below(verb_adverbs_[verb].size())]]);
    }
    if (rng.bernoulli(0.3)) {
      out.emplace_back(kPreps[verb_preps_[verb][rng.below(verb_preps_[verb].size())]]);
      noun_phrase(rng, pick_topical(rng, noun_topic_, topic), out);
    }
  }

  Words sentence(Rng& rng) const {
    std::size_t topic = rng.below(opt_.topics);
    Words out;
    clause(rng, topic, out);
    if (rng.bernoulli(0.25)) {
      out.emplace_back(",");
      out.emplace_back(rng.bernoulli(0.6) ? "and" : "but");
      clause(rng, topic, out);
    }
    out.emplace_back(rng.bernoulli(0.9) ? "." : "?");
    return out;
  }

  ToyLanguageOptions opt_;
  std::vector<std::string> nouns_, verbs_, adjs_, advs_, numerals_;
  std::vector<std::size_t> noun_topic_, verb_topic_, adj_topic_;
  std::vector<std::vector<std::size_t>> verb_objects_, verb_adverbs_, verb_preps_;
  std::vector<std::vector<std::size_t>> noun_adjs_, noun_verbs_, numeral_nouns_;
};

}  // namespace unmt

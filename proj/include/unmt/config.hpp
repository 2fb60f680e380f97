#pragma once

// Flat key=value run configuration with section prefixes ("embed.dim=64").
// '#' starts a comment; blank lines are ignored.

#include <charconv>
#include <functional>

#include "unmt/trainer.hpp"

namespace unmt {

struct RunConfig {
  std::string mono_x, mono_y, dev_x, dev_y;
  TrainerConfig train;
  unsigned threads = 0;  // 0 = hardware concurrency
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    out = std::strtod(v.c_str(), &end);
    UNMT_CHECK(!v.empty() && end == v.c_str() + v.size() && std::isfinite(out), "config: " << key << ": '" << v << "' is not a number");
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    UNMT_CHECK(ec == std::errc() && p == v.data() + v.size(), "config: " << key << ": '" << v << "' is not an integer");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: " + key + ": '" + v + "' is not a boolean");
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class ConfigSchema {
 public:
  struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
  };

  ConfigSchema() {
    str("paths.mono_x", &RunConfig::mono_x);
    str("paths.mono_y", &RunConfig::mono_y);
    str("paths.dev_x", &RunConfig::dev_x);
    str("paths.dev_y", &RunConfig::dev_y);
    add("paths.output_dir", [](RunConfig& c) -> auto& { return c.train.output_dir; });
    num("seed", [](RunConfig& c) -> auto& { return c.train.seed; });
    num("threads", [](RunConfig& c) -> auto& { return c.threads; });
    num("lm.order", [](RunConfig& c) -> auto& { return c.train.lm_order; });
    num("lm.discount", [](RunConfig& c) -> auto& { return c.train.lm_discount; });
    num("vocab.size", [](RunConfig& c) -> auto& { return c.train.vocab_size; });
    num("vocab.min_count", [](RunConfig& c) -> auto& { return c.train.vocab_min_count; });
    num("embed.dim", [](RunConfig& c) -> auto& { return c.train.embed.dim; });
    num("embed.window", [](RunConfig& c) -> auto& { return c.train.embed.window; });
    num("embed.min_count", [](RunConfig& c) -> auto& { return c.train.embed.min_count; });
    num("embed.context_smoothing", [](RunConfig& c) -> auto& { return c.train.embed.context_smoothing; });
    num("embed.eigen_power", [](RunConfig& c) -> auto& { return c.train.embed.eigen_power; });
    flag("embed.center", [](RunConfig& c) -> auto& { return c.train.embed.center; });
    num("map.chains", [](RunConfig& c) -> auto& { return c.train.map.chains; });
    num("map.perturbations", [](RunConfig& c) -> auto& { return c.train.map.perturbations; });
    num("map.rounds", [](RunConfig& c) -> auto& { return c.train.map.rounds; });
    num("map.induction_start", [](RunConfig& c) -> auto& { return c.train.map.induction_start; });
    num("map.induction_step", [](RunConfig& c) -> auto& { return c.train.map.induction_step; });
    num("map.keep_rate", [](RunConfig& c) -> auto& { return c.train.map.keep_rate; });
    num("map.anchor_rate", [](RunConfig& c) -> auto& { return c.train.map.anchor_rate; });
    num("phrase.max_len", [](RunConfig& c) -> auto& { return c.train.phrase.max_len; });
    num("phrase.top_k", [](RunConfig& c) -> auto& { return c.train.phrase.top_k; });
    num("phrase.lambda", [](RunConfig& c) -> auto& { return c.train.phrase.lambda; });
    num("phrase.min_count", [](RunConfig& c) -> auto& { return c.train.phrase.min_count; });
    num("smt.beam", [](RunConfig& c) -> auto& { return c.train.smt.beam_size; });
    num("smt.distortion_limit", [](RunConfig& c) -> auto& { return c.train.smt.distortion_limit; });
    num("smt.distortion_weight", [](RunConfig& c) -> auto& { return c.train.smt.distortion_weight; });
    num("smt.unk_penalty", [](RunConfig& c) -> auto& { return c.train.smt.unk_penalty; });
    num("smt.lm_weight", [](RunConfig& c) -> auto& { return c.train.smt.lm_weight; });
    num("smt.tm_weight", [](RunConfig& c) -> auto& { return c.train.smt.tm_weight; });
    num("smt.max_options", [](RunConfig& c) -> auto& { return c.train.smt.max_options; });
    num("nmt.dim", [](RunConfig& c) -> auto& { return c.train.nmt.dim; });
    num("nmt.lr", [](RunConfig& c) -> auto& { return c.train.nmt.learning_rate; });
    num("nmt.clip", [](RunConfig& c) -> auto& { return c.train.nmt.clip_norm; });
    num("nmt.batch", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    num("train.sub_dataset_size", [](RunConfig& c) -> auto& { return c.train.sub_dataset_size; });
    num("train.passes", [](RunConfig& c) -> auto& { return c.train.passes; });
    num("train.init_passes", [](RunConfig& c) -> auto& { return c.train.init_passes; });
    num("train.lr_decay", [](RunConfig& c) -> auto& { return c.train.lr_decay; });
    num("train.max_epochs", [](RunConfig& c) -> auto& { return c.train.max_epochs; });
    num("train.patience", [](RunConfig& c) -> auto& { return c.train.patience; });
    num("train.beam_train", [](RunConfig& c) -> auto& { return c.train.beam_train; });
    num("train.beam_eval", [](RunConfig& c) -> auto& { return c.train.beam_eval; });
    num("train.dev_limit", [](RunConfig& c) -> auto& { return c.train.dev_limit; });
    fields_.push_back({"train.mode", [](const RunConfig& c) { return to_string(c.train.mode); },
                       [](RunConfig& c, const std::string& v) { c.train.mode = parse_weight_mode(v); }});
  }

  const std::vector<Field>& fields() const { return fields_; }

  const Field* find(const std::string& key) const {
    for (const auto& f : fields_)
      if (f.key == key) return &f;
    return nullptr;
  }

  void set(RunConfig& c, const std::string& key, const std::string& value) const {
    const auto* f = find(key);
    UNMT_CHECK(f, "config: unknown key '" << key << "'");
    try {
      f->set(c, value);
    } catch (const Error& e) {
      std::string msg = e.what();
      if (msg.find(key) == std::string::npos) msg = "config: " + key + ": " + msg;
      throw Error(msg);
    }
  }

  // Applies "key=value" lines from text. `origin` names the source in errors.
  void apply_text(RunConfig& c, const std::string& text, const std::string& origin) const {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      UNMT_CHECK(eq != std::string::npos, origin << ":" << lineno << ": expected key=value");
      set(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
  }

  void apply_file(RunConfig& c, const std::string& path) const {
    std::ifstream in(path, std::ios::binary);
    UNMT_CHECK(in, "cannot open config " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_text(c, ss.str(), path);
  }

  std::string dump(const RunConfig& c) const {
    std::ostringstream os;
    for (const auto& f : fields_) os << f.key << '=' << f.get(c) << '\n';
    return os.str();
  }

  // Checks ranges; paths are checked by the commands that need them.
  static void validate(const RunConfig& c) { c.train.validate(); }

 private:
  template <class T>
  static std::string show(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  }

  void str(const std::string& key, std::string RunConfig::*member) {
    fields_.push_back({key, [member](const RunConfig& c) { return c.*member; },
                       [member](RunConfig& c, const std::string& v) { c.*member = v; }});
  }

  template <class Ref>
  void add(const std::string& key, Ref ref) {
    fields_.push_back({key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
                       [ref](RunConfig& c, const std::string& v) { ref(c) = v; }});
  }

  template <class Ref>
  void num(const std::string& key, Ref ref) {
    using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
    fields_.push_back({key, [ref](const RunConfig& c) { return show(ref(const_cast<RunConfig&>(c))); },
                       [ref, key](RunConfig& c, const std::string& v) { ref(c) = detail::parse_number<T>(key, v); }});
  }

  template <class Ref>
  void flag(const std::string& key, Ref ref) {
    fields_.push_back({key, [ref](const RunConfig& c) { return show(ref(const_cast<RunConfig&>(c))); },
                       [ref, key](RunConfig& c, const std::string& v) { ref(c) = detail::parse_bool(key, v); }});
  }

  std::vector<Field> fields_;
};

}  // namespace unmt

// Command-line driver. Every subcommand reads and writes the plain file
// formats of the library modules; corpora are pre-tokenized, one sentence per
// line, tokens separated by whitespace.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "unmt/cipher.hpp"
#include "unmt/config.hpp"
#include "unmt/tabular_em.hpp"
#include "unmt/toy_language.hpp"

namespace fs = std::filesystem;
using namespace unmt;

namespace {

constexpr const char* kOutputDirEnv = "UNMT_OUTPUT_DIR";

std::vector<Words> read_corpus(const std::string& path) { return split_lines(read_lines(path)); }

void write_corpus(const fs::path& path, const std::vector<Words>& c) { write_lines(path.string(), join_lines(c)); }

void ensure_parent(const std::string& path) {
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::vector<std::pair<std::string, std::string>> read_gold(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_char(line, '\t');
    UNMT_CHECK(f.size() == 2, path << ":" << lineno << ": expected src<TAB>tgt");
    out.emplace_back(f[0], f[1]);
  }
  return out;
}

// --- make-cipher -----------------------------------------------------------

struct CipherArgs {
  std::string corpus, out_dir;
  std::size_t toy_sentences = 20000;
  std::uint64_t toy_seed = 11;
  CipherSpec spec = default_spec();
  bool random_reorder = false;

  static CipherSpec default_spec() {
    CipherSpec s;
    s.reorder_window = 2;
    return s;
  }
};

void add_make_cipher(CLI::App& app, CipherArgs& a) {
  auto* c = app.add_subcommand("make-cipher", "Build a cipher language pair from a Y corpus (or a generated toy corpus)");
  c->add_option("--corpus", a.corpus, "Y-side corpus; when omitted a toy corpus is generated");
  c->add_option("--toy-sentences", a.toy_sentences, "Toy corpus size");
  c->add_option("--toy-seed", a.toy_seed, "Toy corpus sampling seed");
  c->add_option("--seed", a.spec.seed, "Cipher seed");
  c->add_option("--reorder-window", a.spec.reorder_window, "Maximum token displacement");
  c->add_option("--drop-rate", a.spec.drop_rate, "Token drop probability, at most 0.2");
  c->add_option("--dev-size", a.spec.dev_size, "Parallel dev sentences");
  c->add_option("--test-size", a.spec.test_size, "Parallel test sentences");
  c->add_flag("--random-reorder", a.random_reorder, "Shuffle each sentence independently instead of per-type drift");
  c->add_option("--out-dir", a.out_dir, "Output directory")->required();
  c->callback([&a] {
    std::vector<Words> y = a.corpus.empty() ? ToyLanguage().generate(a.toy_sentences, a.toy_seed) : read_corpus(a.corpus);
    a.spec.systematic_reorder = !a.random_reorder;
    auto pair = generate_cipher_pair(y, a.spec);
    fs::path d(a.out_dir);
    fs::create_directories(d);
    write_corpus(d / "train.x", pair.train_x);
    write_corpus(d / "train.y", pair.train_y);
    write_corpus(d / "dev.x", pair.dev_x);
    write_corpus(d / "dev.y", pair.dev_y);
    write_corpus(d / "test.x", pair.test_x);
    write_corpus(d / "test.y", pair.test_y);
    std::vector<std::string> gold;
    for (const auto& [x, yy] : pair.gold) gold.push_back(x + "\t" + yy);
    write_lines((d / "gold.tsv").string(), gold);
    std::cout << "train " << pair.train_x.size() << "/" << pair.train_y.size() << ", dev " << pair.dev_x.size() << ", test "
              << pair.test_x.size() << ", gold pairs " << pair.gold.size() << "\n";
  });
}

// --- train-lm --------------------------------------------------------------

struct LmArgs {
  std::string corpus, out, eval;
  int order = 3;
  double discount = 0.75;
  std::size_t vocab_size = 30000, min_count = 1;
};

void add_train_lm(CLI::App& app, LmArgs& a) {
  auto* c = app.add_subcommand("train-lm", "Train an interpolated Kneser-Ney n-gram model");
  c->add_option("--corpus", a.corpus, "Training corpus")->required();
  c->add_option("--order", a.order, "n-gram order");
  c->add_option("--discount", a.discount, "Absolute discount");
  c->add_option("--vocab-size", a.vocab_size, "Maximum vocabulary size");
  c->add_option("--min-count", a.min_count, "Minimum token count");
  c->add_option("--eval", a.eval, "Held-out corpus for a perplexity report");
  c->add_option("--out", a.out, "Model file")->required();
  c->callback([&a] {
    auto corpus = read_corpus(a.corpus);
    auto vocab = build_vocab(corpus, a.vocab_size, a.min_count);
    auto lm = train_ngram(vocab, encode_corpus(vocab, corpus), a.order, a.discount);
    ensure_parent(a.out);
    lm.save(a.out);
    std::cout << "vocabulary " << vocab.size() << ", order " << a.order << "\n";
    if (!a.eval.empty()) std::cout << "perplexity " << format_double(perplexity(lm, encode_corpus(vocab, read_corpus(a.eval)))) << "\n";
  });
}

// --- train-embed -----------------------------------------------------------

struct EmbedArgs {
  std::string corpus, out;
  EmbedOptions opt;
  bool no_center = false;
};

void add_train_embed(CLI::App& app, EmbedArgs& a) {
  auto* c = app.add_subcommand("train-embed", "Train monolingual word embeddings");
  c->add_option("--corpus", a.corpus, "Training corpus")->required();
  c->add_option("--dim", a.opt.dim, "Embedding dimension");
  c->add_option("--window", a.opt.window, "Context window");
  c->add_option("--min-count", a.opt.min_count, "Minimum word count");
  c->add_option("--context-smoothing", a.opt.context_smoothing, "Context distribution exponent");
  c->add_option("--eigen-power", a.opt.eigen_power, "Singular value exponent");
  c->add_flag("--no-center", a.no_center, "Skip mean centering");
  c->add_option("--out", a.out, "Embedding file")->required();
  c->callback([&a] {
    a.opt.center = !a.no_center;
    auto space = train_embeddings(read_corpus(a.corpus), a.opt);
    ensure_parent(a.out);
    space.save(a.out);
    std::cout << space.size() << " words, dim " << space.dim() << "\n";
  });
}

// --- map-embed -------------------------------------------------------------

struct MapArgs {
  std::string src, tgt, out, gold;
  UnsupervisedMapOptions opt;
};

void add_map_embed(CLI::App& app, MapArgs& a) {
  auto* c = app.add_subcommand("map-embed", "Induce an orthogonal cross-lingual map without supervision");
  c->add_option("--src-emb", a.src, "Source embeddings")->required();
  c->add_option("--tgt-emb", a.tgt, "Target embeddings")->required();
  c->add_option("--seed", a.opt.seed, "Restart seed");
  c->add_option("--chains", a.opt.chains, "Independent restarts");
  c->add_option("--perturbations", a.opt.perturbations, "Perturbed seeds per chain");
  c->add_option("--rounds", a.opt.rounds, "Self-learning rounds");
  c->add_option("--gold", a.gold, "Gold dictionary for a precision@1 report");
  c->add_option("--out", a.out, "Mapping file")->required();
  c->callback([&a] {
    auto ex = EmbeddingSpace::load(a.src), ey = EmbeddingSpace::load(a.tgt);
    auto map = unsupervised_map(ex, ey, a.opt);
    ensure_parent(a.out);
    map.save(a.out);
    std::cout << "induced " << map.induced.size() << " pairs, mean cosine " << format_double(map.mean_cosine()) << "\n";
    if (!a.gold.empty())
      std::cout << "precision@1 " << format_double(lexicon_precision_at_k(translate_top_k(map, ex, ey, 1), read_gold(a.gold), 1)) << "\n";
  });
}

// --- phrase-table ----------------------------------------------------------

struct PhraseArgs {
  std::string map, src_emb, tgt_emb, src_corpus, tgt_corpus, out;
  PhraseOptions opt;
  bool inverse = false;
};

void add_phrase_table(CLI::App& app, PhraseArgs& a) {
  auto* c = app.add_subcommand("phrase-table", "Infer a phrase table from mapped embeddings");
  c->add_option("--map", a.map, "Mapping file (source space to target space)")->required();
  c->add_option("--src-emb", a.src_emb, "Embeddings of the table's source side")->required();
  c->add_option("--tgt-emb", a.tgt_emb, "Embeddings of the table's target side")->required();
  c->add_option("--src-corpus", a.src_corpus, "Corpus of the table's source side")->required();
  c->add_option("--tgt-corpus", a.tgt_corpus, "Corpus of the table's target side")->required();
  c->add_flag("--inverse", a.inverse, "Use the transposed map (source is the map's target language)");
  c->add_option("--max-len", a.opt.max_len, "Longest phrase");
  c->add_option("--top-k", a.opt.top_k, "Candidates per source phrase");
  c->add_option("--lambda", a.opt.lambda, "Softmax temperature");
  c->add_option("--min-count", a.opt.min_count, "Minimum count of multi-word phrases");
  c->add_option("--out", a.out, "Table file")->required();
  c->callback([&a] {
    auto map = CrossLingualMap::load(a.map);
    if (a.inverse) map = inverse_map(map);
    auto table = infer_phrase_table(map, EmbeddingSpace::load(a.src_emb), EmbeddingSpace::load(a.tgt_emb), read_corpus(a.src_corpus),
                                    read_corpus(a.tgt_corpus), a.opt);
    ensure_parent(a.out);
    table.save(a.out);
    std::cout << table.entries().size() << " source phrases\n";
  });
}

// --- init-synthetic --------------------------------------------------------

struct InitArgs {
  std::string table, lm, input, out;
  double lambda = 30.0;
  DecoderConfig dec;
};

void add_init_synthetic(CLI::App& app, InitArgs& a) {
  auto* c = app.add_subcommand("init-synthetic", "Decode pseudo-sources for real sentences with the phrase-based system");
  c->add_option("--table", a.table, "Phrase table keyed by the real side")->required();
  c->add_option("--lm", a.lm, "Language model of the generated side")->required();
  c->add_option("--input", a.input, "Real sentences")->required();
  c->add_option("--lambda", a.lambda, "Temperature recorded with the table");
  c->add_option("--beam", a.dec.beam_size, "Stack size");
  c->add_option("--distortion-limit", a.dec.distortion_limit, "Maximum jump");
  c->add_option("--distortion-weight", a.dec.distortion_weight, "Weight per jumped position");
  c->add_option("--unk-penalty", a.dec.unk_penalty, "Score of an uncovered word");
  c->add_option("--lm-weight", a.dec.lm_weight, "Language model weight");
  c->add_option("--tm-weight", a.dec.tm_weight, "Translation model weight");
  c->add_option("--max-options", a.dec.max_options, "Options per span, 0 keeps all");
  c->add_option("--out", a.out, "Synthetic corpus (x<TAB>y<TAB>weight)")->required();
  c->callback([&a] {
    a.dec.validate();
    auto table = PhraseTable::load(a.table, a.lambda);
    auto lm = NGramModel::load(a.lm);
    auto pairs = generate_initial_synthetic(read_corpus(a.input), table, lm, a.dec);
    ensure_parent(a.out);
    save_synthetic(a.out, pairs);
    std::cout << pairs.size() << " pairs\n";
  });
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, mode, output_dir;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int max_epochs = -1;
};

void add_train(CLI::App& app, TrainArgs& a, const unsigned& threads) {
  const ConfigSchema schema;
  std::string keys = "\nConfig keys (key=default):\n";
  RunConfig defaults;
  for (const auto& f : schema.fields()) keys += "  " + f.key + "=" + f.get(defaults) + "\n";
  auto* c = app.add_subcommand("train", "Run iterative back-translation from monolingual corpora");
  c->footer(keys);
  c->add_option("--config", a.config, "Config file (key=value lines)");
  c->add_option("--set", a.sets, "Override one config key, as key=value (repeatable)");
  c->add_option("--mode", a.mode, "Weighting mode: weighted or uniform (overrides train.mode)");
  c->add_option("--seed", a.seed, "Seed (overrides seed); 0 keeps the config value");
  c->add_option("--max-epochs", a.max_epochs, "Epoch cap (overrides train.max_epochs); -1 keeps the config value");
  c->add_option("--output-dir", a.output_dir, "Output directory (overrides paths.output_dir and " + std::string(kOutputDirEnv) + ")");
  c->callback([&a, &threads] {
    const ConfigSchema schema;
    RunConfig rc;
    if (!a.config.empty()) schema.apply_file(rc, a.config);
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) rc.train.output_dir = env;
    for (const auto& kv : a.sets) {
      auto eq = kv.find('=');
      UNMT_CHECK(eq != std::string::npos, "--set expects key=value, got '" << kv << "'");
      schema.set(rc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!a.mode.empty()) schema.set(rc, "train.mode", a.mode);
    if (a.seed) rc.train.seed = a.seed;
    if (a.max_epochs >= 0) rc.train.max_epochs = a.max_epochs;
    if (!a.output_dir.empty()) rc.train.output_dir = a.output_dir;
    if (threads) rc.threads = threads;
    ConfigSchema::validate(rc);
    for (auto [key, path] : {std::pair{"paths.mono_x", rc.mono_x}, {"paths.mono_y", rc.mono_y}, {"paths.dev_x", rc.dev_x},
                             {"paths.dev_y", rc.dev_y}, {"paths.output_dir", rc.train.output_dir}})
      UNMT_CHECK(!path.empty(), "config: " << key << " is required");
    thread_cap().store(rc.threads);

    fs::create_directories(rc.train.output_dir);
    write_lines((fs::path(rc.train.output_dir) / "config.txt").string(), split_char(schema.dump(rc), '\n'));
    TrainingData data{read_corpus(rc.mono_x), read_corpus(rc.mono_y), read_corpus(rc.dev_x), read_corpus(rc.dev_y)};
    Trainer trainer(rc.train, std::move(data), [](const std::string& m) { std::cerr << m << std::endl; });
    trainer.prepare();
    auto [sx, sy] = trainer.evaluate_smt();
    std::cerr << "phrase-based dev BLEU: x-y " << format_double(sx) << ", y-x " << format_double(sy) << std::endl;
    trainer.run();
    std::cout << emit_curves(to_curves(trainer.history()));
  });
}

// --- eval-bleu -------------------------------------------------------------

struct BleuArgs {
  std::string hyp, ref;
  std::size_t max_n = 4;
};

void add_eval_bleu(CLI::App& app, BleuArgs& a) {
  auto* c = app.add_subcommand("eval-bleu", "Corpus BLEU of a hypothesis file against one reference file");
  c->add_option("--hyp", a.hyp, "Hypotheses")->required();
  c->add_option("--ref", a.ref, "References")->required();
  c->add_option("--max-n", a.max_n, "Longest n-gram");
  c->callback([&a] { std::cout << bleu(read_corpus(a.hyp), read_corpus(a.ref), a.max_n).to_string() << "\n"; });
}

// --- inspect-weights -------------------------------------------------------

struct InspectArgs {
  std::string forward, lm_x, lm_y, pairs, out;
  std::size_t batch = 32;
  std::string mode = "weighted";
};

void add_inspect_weights(CLI::App& app, InspectArgs& a) {
  auto* c = app.add_subcommand("inspect-weights", "Dump weight components for synthetic pairs");
  c->add_option("--forward", a.forward, "x->y model checkpoint")->required();
  c->add_option("--lm-x", a.lm_x, "Source language model")->required();
  c->add_option("--lm-y", a.lm_y, "Target language model")->required();
  c->add_option("--pairs", a.pairs, "Synthetic corpus (x<TAB>y<TAB>weight)")->required();
  c->add_option("--batch", a.batch, "Normalization batch size");
  c->add_option("--mode", a.mode, "weighted or uniform");
  c->add_option("--out", a.out, "Output TSV; stdout when omitted");
  c->callback([&a] {
    UNMT_CHECK(a.batch >= 1, "--batch must be >= 1");
    auto mode = parse_weight_mode(a.mode);
    auto model = Seq2SeqModel::load(a.forward);
    auto lx = NGramModel::load(a.lm_x), ly = NGramModel::load(a.lm_y);
    const auto& vx = model.source_vocab();
    const auto& vy = model.target_vocab();
    auto synthetic = load_synthetic(a.pairs);
    UNMT_CHECK(!synthetic.empty(), a.pairs << ": no pairs");
    std::vector<std::string> lines = {"x\ty\tlogPy\tlogPy_model\tlogPx\tlogPyx\tw_star"};
    for (std::size_t b = 0; b < synthetic.size(); b += a.batch) {
      std::vector<std::pair<Sentence, Sentence>> chunk;
      for (std::size_t i = b; i < std::min(synthetic.size(), b + a.batch); ++i)
        chunk.emplace_back(vx.encode(synthetic[i].source), vy.encode(synthetic[i].target));
      for (const auto& p : weigh_batch(chunk, lx, ly, model, mode)) lines.push_back(weight_dump_line(p, vx, vy));
    }
    if (a.out.empty()) {
      for (const auto& l : lines) std::cout << l << "\n";
    } else {
      ensure_parent(a.out);
      write_lines(a.out, lines);
    }
  });
}

// --- em-harness ------------------------------------------------------------

struct EmArgs {
  int size = 4, steps = 20;
  std::uint64_t seed = 1;
};

void add_em_harness(CLI::App& app, EmArgs& a) {
  auto* c = app.add_subcommand("em-harness", "Exact EM on a random tabular instance; checks the objective never drops");
  c->add_option("--size", a.size, "|X| = |Y|")->check(CLI::Range(1, 8));
  c->add_option("--steps", a.steps, "EM steps")->check(CLI::NonNegativeNumber);
  c->add_option("--seed", a.seed, "Instance seed");
  c->callback([&a] {
    Rng rng(a.seed);
    auto inst = random_instance(a.size, a.size, rng);
    auto trace = run_exact_em(inst, random_table(a.size, a.size, rng), a.steps);
    std::cout << "step,objective,kl\n";
    for (std::size_t i = 0; i < trace.objective.size(); ++i)
      std::cout << i << ',' << format_double(trace.objective[i]) << ',' << format_double(trace.kl[i]) << '\n';
    for (std::size_t i = 1; i < trace.objective.size(); ++i)
      UNMT_CHECK(trace.objective[i] >= trace.objective[i - 1] - 1e-9,
                 "objective decreased at step " << i << ": " << format_double(trace.objective[i - 1]) << " -> " << format_double(trace.objective[i]));
  });
}

// --- emit-curves -----------------------------------------------------------

struct CurveArgs {
  std::string run_dir, out;
};

void add_emit_curves(CLI::App& app, CurveArgs& a) {
  auto* c = app.add_subcommand("emit-curves", "Rebuild the per-epoch CSV from a run's checkpoint directories");
  c->add_option("--run-dir", a.run_dir, "Training output directory")->required();
  c->add_option("--out", a.out, "CSV file; stdout when omitted");
  c->callback([&a] {
    std::vector<EpochRecord> history;
    for (int e = 0;; ++e) {
      fs::path state = fs::path(a.run_dir) / ("epoch_" + std::to_string(e)) / "state.txt";
      if (!fs::exists(state)) break;
      std::map<std::string, std::string> kv;
      for (const auto& line : read_lines(state.string())) {
        auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
      }
      auto num = [&](const char* key) {
        UNMT_CHECK(kv.count(key), state.string() << ": missing " << key);
        return detail::parse_number<double>(key, kv[key]);
      };
      history.push_back({e, num("dev_bleu_xy"), num("dev_bleu_yx"), num("mean_weight_xy"), num("mean_weight_yx"), num("train_loss_xy"),
                         num("train_loss_yx")});
    }
    UNMT_CHECK(!history.empty(), a.run_dir << ": no epoch_N/state.txt found");
    auto csv = emit_curves(to_curves(history));
    if (a.out.empty()) {
      std::cout << csv;
    } else {
      ensure_parent(a.out);
      std::ofstream(a.out, std::ios::binary) << csv;
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Unsupervised machine translation with language-model-weighted back-translation", "unmt");
  app.option_defaults()->always_capture_default();
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap, 0 uses all cores")
      ->trigger_on_parse()
      ->each([](const std::string& v) { thread_cap().store(static_cast<unsigned>(std::stoul(v))); });
  app.require_subcommand(1);
  app.fallthrough();

  CipherArgs cipher;
  LmArgs lm;
  EmbedArgs embed;
  MapArgs map;
  PhraseArgs phrase;
  InitArgs init;
  TrainArgs train;
  BleuArgs bleu_args;
  InspectArgs inspect;
  EmArgs em;
  CurveArgs curves;
  add_make_cipher(app, cipher);
  add_train_lm(app, lm);
  add_train_embed(app, embed);
  add_map_embed(app, map);
  add_phrase_table(app, phrase);
  add_init_synthetic(app, init);
  add_train(app, train, threads);
  add_eval_bleu(app, bleu_args);
  add_inspect_weights(app, inspect);
  add_em_harness(app, em);
  add_emit_curves(app, curves);

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}

#pragma once

// Iterative back-translation driven by language models. Epoch 0 trains both
// translation models on phrase-based synthetic data; every later epoch
// back-translates fresh monolingual samples with the opposite model, weights
// the pairs and trains both directions.

#include <filesystem>
#include <functional>
#include <memory>

#include "unmt/eval.hpp"
#include "unmt/phrase.hpp"
#include "unmt/smt.hpp"
#include "unmt/weighting.hpp"

namespace unmt {

struct TrainerConfig {
  // Language models.
  int lm_order = 3;
  double lm_discount = 0.75;
  // Vocabulary shared by the language models and translation models.
  std::size_t vocab_size = 30000;
  std::size_t vocab_min_count = 1;
  EmbedOptions embed;
  UnsupervisedMapOptions map;
  PhraseOptions phrase;
  DecoderConfig smt;
  Seq2SeqHyper nmt;
  std::size_t batch_size = 32;
  std::size_t sub_dataset_size = 2000;
  // Passes over each epoch's synthetic data; epoch 0 uses init_passes.
  std::size_t passes = 1;
  std::size_t init_passes = 1;
  // The learning rate of epoch e is nmt.learning_rate * lr_decay^e.
  double lr_decay = 1.0;
  int max_epochs = 10;
  int patience = 3;
  std::size_t beam_train = 4;
  std::size_t beam_eval = 16;
  // Dev sentences scored per direction; zero scores all of them.
  std::size_t dev_limit = 0;
  WeightMode mode = WeightMode::kWeighted;
  std::uint64_t seed = 1;
  // Per-epoch checkpoints are written below this directory when non-empty.
  std::string output_dir;

  void validate() const {
    UNMT_CHECK(lm_order >= 1 && lm_order <= kMaxLmOrder, "lm.order must lie in [1, " << kMaxLmOrder << "]");
    UNMT_CHECK(lm_discount > 0 && lm_discount < 1, "lm.discount must lie in (0, 1)");
    UNMT_CHECK(embed.dim >= 1 && embed.window >= 1, "embed.dim and embed.window must be >= 1");
    UNMT_CHECK(phrase.max_len >= 1 && phrase.top_k >= 1 && phrase.lambda >= 0, "phrase options out of range");
    smt.validate();
    UNMT_CHECK(nmt.dim >= 2, "nmt.dim must be >= 2");
    UNMT_CHECK(nmt.learning_rate > 0 && nmt.clip_norm > 0, "nmt.lr and nmt.clip must be > 0");
    UNMT_CHECK(batch_size >= 1, "nmt.batch must be >= 1");
    UNMT_CHECK(sub_dataset_size >= 1, "train.sub_dataset_size must be >= 1");
    UNMT_CHECK(passes >= 1 && init_passes >= 1, "train.passes and train.init_passes must be >= 1");
    UNMT_CHECK(lr_decay > 0 && lr_decay <= 1, "train.lr_decay must lie in (0, 1]");
    UNMT_CHECK(max_epochs >= 0, "train.max_epochs must be >= 0");
    UNMT_CHECK(patience >= 1, "train.patience must be >= 1");
    UNMT_CHECK(beam_train >= 1 && beam_eval >= 1, "train.beam_train and train.beam_eval must be >= 1");
  }
};

// Monolingual training corpora plus a parallel dev set used only for scoring.
struct TrainingData {
  std::vector<Words> mono_x, mono_y;
  std::vector<Words> dev_x, dev_y;
};

struct EpochRecord {
  int epoch = 0;
  double bleu_xy = 0, bleu_yx = 0;
  double mean_weight_xy = 1, mean_weight_yx = 1;
  double loss_xy = 0, loss_yx = 0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

inline std::vector<CurveRow> to_curves(const std::vector<EpochRecord>& history) {
  std::vector<CurveRow> rows;
  for (const auto& r : history) {
    rows.push_back({r.epoch, "x-y", r.bleu_xy, r.mean_weight_xy, r.loss_xy});
    rows.push_back({r.epoch, "y-x", r.bleu_yx, r.mean_weight_yx, r.loss_yx});
  }
  return rows;
}

// True when the summed dev BLEU has not improved on its earlier best for the
// last `patience` epochs, or when the epoch cap is reached.
inline bool converged(const std::vector<EpochRecord>& history, int patience, int max_epochs = std::numeric_limits<int>::max()) {
  UNMT_CHECK(patience >= 1, "converged: patience must be >= 1");
  if (!history.empty() && history.back().epoch >= max_epochs) return true;
  if (history.size() <= static_cast<std::size_t>(patience)) return false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + static_cast<std::size_t>(patience) < history.size(); ++i)
    best = std::max(best, history[i].bleu_xy + history[i].bleu_yx);
  for (std::size_t i = history.size() - static_cast<std::size_t>(patience); i < history.size(); ++i)
    if (history[i].bleu_xy + history[i].bleu_yx > best) return false;
  return true;
}

// Everything built once from monolingual data before the first epoch.
struct Resources {
  Vocabulary vocab_x, vocab_y;
  std::unique_ptr<NGramModel> lm_x, lm_y;
  EmbeddingSpace emb_x, emb_y;
  CrossLingualMap map;
  PhraseTable table_xy, table_yx;  // phi(y | x) keyed by x, phi(x | y) keyed by y
};

class Trainer {
 public:
  using Logger = std::function<void(const std::string&)>;

  Trainer(TrainerConfig cfg, TrainingData data, Logger log = {}) : cfg_(std::move(cfg)), data_(std::move(data)), log_(std::move(log)) {
    cfg_.validate();
    UNMT_CHECK(!data_.mono_x.empty() && !data_.mono_y.empty(), "trainer: monolingual corpora must be non-empty");
    UNMT_CHECK(data_.dev_x.size() == data_.dev_y.size(), "trainer: dev sides differ in length");
  }

  const TrainerConfig& config() const { return cfg_; }
  TrainerConfig& config() { return cfg_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  const Resources& resources() const { return *res_; }
  const Seq2SeqModel& forward() const { return fwd_; }
  const Seq2SeqModel& backward() const { return bwd_; }
  int epoch() const { return static_cast<int>(history_.size()); }
  // SMT output BLEU on the dev set, filled by evaluate_smt().
  std::pair<double, double> smt_bleu() const { return smt_bleu_; }
  // Counters for the generation paths taken so far.
  std::size_t smt_generations() const { return smt_generations_; }
  std::size_t nmt_generations() const { return nmt_generations_; }

  // LMs, embeddings, cross-lingual map, phrase tables, fresh models.
  void prepare() {
    phase("prepare", [&] {
      auto r = std::make_shared<Resources>();
      r->vocab_x = build_vocab(data_.mono_x, cfg_.vocab_size, cfg_.vocab_min_count);
      r->vocab_y = build_vocab(data_.mono_y, cfg_.vocab_size, cfg_.vocab_min_count);
      r->lm_x = std::make_unique<NGramModel>(train_ngram(r->vocab_x, encode_corpus(r->vocab_x, data_.mono_x), cfg_.lm_order, cfg_.lm_discount));
      r->lm_y = std::make_unique<NGramModel>(train_ngram(r->vocab_y, encode_corpus(r->vocab_y, data_.mono_y), cfg_.lm_order, cfg_.lm_discount));
      note("language models trained");
      r->emb_x = train_embeddings(data_.mono_x, cfg_.embed);
      r->emb_y = train_embeddings(data_.mono_y, cfg_.embed);
      note("embeddings trained");
      auto mo = cfg_.map;
      mo.seed = cfg_.seed;
      r->map = unsupervised_map(r->emb_x, r->emb_y, mo);
      note("cross-lingual map induced with " + std::to_string(r->map.induced.size()) + " dictionary pairs");
      r->table_xy = infer_phrase_table(r->map, r->emb_x, r->emb_y, data_.mono_x, data_.mono_y, cfg_.phrase);
      r->table_yx = infer_phrase_table(inverse_map(r->map), r->emb_y, r->emb_x, data_.mono_y, data_.mono_x, cfg_.phrase);
      note("phrase tables inferred");
      res_ = std::move(r);
      Seq2SeqHyper h = cfg_.nmt;
      h.seed = cfg_.seed * 2 + 1;
      fwd_ = Seq2SeqModel(res_->vocab_x, res_->vocab_y, h);
      h.seed = cfg_.seed * 2 + 2;
      bwd_ = Seq2SeqModel(res_->vocab_y, res_->vocab_x, h);
    });
  }

  // Dev BLEU of the phrase-based system in both directions.
  std::pair<double, double> evaluate_smt() {
    require_prepared();
    phase("smt-eval", [&] {
      auto [dx, dy] = dev_subset();
      auto to_y = generate_initial_synthetic(dx, res_->table_yx, *res_->lm_y, cfg_.smt);
      auto to_x = generate_initial_synthetic(dy, res_->table_xy, *res_->lm_x, cfg_.smt);
      std::vector<Words> hy, hx;
      for (auto& p : to_y) hy.push_back(std::move(p.source));
      for (auto& p : to_x) hx.push_back(std::move(p.source));
      smt_bleu_ = {bleu(hy, dy).score, bleu(hx, dx).score};
    });
    return smt_bleu_;
  }

  // One iteration of the outer loop. Returns the new history record.
  EpochRecord run_epoch() {
    require_prepared();
    const int e = epoch();
    Rng rng = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(e) + 1);
    std::vector<Words> d_y = sample(data_.mono_y, rng), d_x = sample(data_.mono_x, rng);

    // Pairs for the x -> y model are (pseudo x, real y) and vice versa.
    std::vector<std::pair<Sentence, Sentence>> pairs_xy, pairs_yx;
    std::vector<double> w_xy, w_yx;
    if (e == 0) {
      phase("generate", e, [&] {
        auto fx = generate_initial_synthetic(d_y, res_->table_xy, *res_->lm_x, cfg_.smt);
        auto fy = generate_initial_synthetic(d_x, res_->table_yx, *res_->lm_y, cfg_.smt);
        smt_generations_ += fx.size() + fy.size();
        for (const auto& p : fx) pairs_xy.emplace_back(res_->vocab_x.encode(p.source), res_->vocab_y.encode(p.target));
        for (const auto& p : fy) pairs_yx.emplace_back(res_->vocab_y.encode(p.source), res_->vocab_x.encode(p.target));
      });
      bucket_by_length(pairs_xy, rng);
      bucket_by_length(pairs_yx, rng);
    } else {
      // Both directions read the start-of-epoch models only.
      const Seq2SeqModel fwd0 = fwd_, bwd0 = bwd_;
      phase("generate", e, [&] {
        pairs_xy = back_translate(bwd0, encode_corpus(res_->vocab_y, d_y));
        pairs_yx = back_translate(fwd0, encode_corpus(res_->vocab_x, d_x));
        nmt_generations_ += pairs_xy.size() + pairs_yx.size();
      });
      bucket_by_length(pairs_xy, rng);
      bucket_by_length(pairs_yx, rng);
      phase("weight", e, [&] {
        w_xy = weights_for(pairs_xy, *res_->lm_x, *res_->lm_y, fwd0);
        w_yx = weights_for(pairs_yx, *res_->lm_y, *res_->lm_x, bwd0);
      });
    }
    if (w_xy.empty()) w_xy.assign(pairs_xy.size(), 1.0);
    if (w_yx.empty()) w_yx.assign(pairs_yx.size(), 1.0);

    EpochRecord rec;
    rec.epoch = e;
    rec.mean_weight_xy = mean(w_xy);
    rec.mean_weight_yx = mean(w_yx);
    phase("train", e, [&] {
      std::size_t passes = e == 0 ? cfg_.init_passes : cfg_.passes;
      double lr = cfg_.nmt.learning_rate * std::pow(cfg_.lr_decay, e);
      rec.loss_xy = train_direction(fwd_, pairs_xy, w_xy, passes, lr, rng);
      rec.loss_yx = train_direction(bwd_, pairs_yx, w_yx, passes, lr, rng);
    });
    phase("evaluate", e, [&] {
      auto [dx, dy] = dev_subset();
      rec.bleu_xy = translate_bleu(fwd_, res_->vocab_x, res_->vocab_y, dx, dy);
      rec.bleu_yx = translate_bleu(bwd_, res_->vocab_y, res_->vocab_x, dy, dx);
    });
    history_.push_back(rec);
    note("epoch " + std::to_string(e) + ": BLEU x-y " + format_fixed(rec.bleu_xy) + ", y-x " + format_fixed(rec.bleu_yx) +
         ", mean weight " + format_fixed(rec.mean_weight_xy) + "/" + format_fixed(rec.mean_weight_yx));
    if (!cfg_.output_dir.empty()) phase("checkpoint", e, [&] { checkpoint(rec); });
    return rec;
  }

  // The whole loop: prepare when needed, then epochs until convergence.
  const std::vector<EpochRecord>& run() {
    if (!res_) prepare();
    do {
      run_epoch();
    } while (!converged(history_, cfg_.patience, cfg_.max_epochs));
    return history_;
  }

  // Batch training objective: sum_i w_i * nll_i / sum_i w_i per batch.
  double train_direction(Seq2SeqModel& model, const std::vector<std::pair<Sentence, Sentence>>& pairs, const std::vector<double>& w,
                         std::size_t passes, double lr, Rng& rng) const {
    std::vector<std::size_t> batches;
    for (std::size_t b = 0; b < pairs.size(); b += cfg_.batch_size) batches.push_back(b);
    double loss = 0;
    std::size_t steps = 0;
    for (std::size_t pass = 0; pass < passes; ++pass) {
      rng.shuffle(batches);
      for (std::size_t b : batches) {
        std::vector<TrainPair> batch;
        for (std::size_t i = b; i < std::min(pairs.size(), b + cfg_.batch_size); ++i) batch.push_back({pairs[i].first, pairs[i].second, w[i]});
        loss += model.train_batch(batch, lr, steps++);
      }
    }
    return steps ? loss / static_cast<double>(steps) : 0.0;
  }

  // Raw weights from the frozen model, zero-mean normalized per training batch.
  std::vector<double> weights_for(const std::vector<std::pair<Sentence, Sentence>>& pairs, const NGramModel& lm_src,
                                  const NGramModel& lm_tgt, const Seq2SeqModel& model) const {
    std::vector<double> w;
    for (std::size_t b = 0; b < pairs.size(); b += cfg_.batch_size) {
      std::vector<std::pair<Sentence, Sentence>> chunk(pairs.begin() + static_cast<long>(b),
                                                       pairs.begin() + static_cast<long>(std::min(pairs.size(), b + cfg_.batch_size)));
      for (const auto& p : weigh_batch(chunk, lm_src, lm_tgt, model, cfg_.mode)) w.push_back(p.w_star);
    }
    return w;
  }

 private:
  template <class F>
  void phase(const std::string& name, F&& f) {
    try {
      f();
    } catch (const Error& err) {
      throw Error("trainer: " + name + " failed: " + err.what());
    }
  }
  template <class F>
  void phase(const std::string& name, int e, F&& f) {
    try {
      f();
    } catch (const TrainingError& err) {
      throw TrainingError("trainer: epoch " + std::to_string(e) + ", " + name + " failed: " + err.what());
    } catch (const Error& err) {
      throw Error("trainer: epoch " + std::to_string(e) + ", " + name + " failed: " + err.what());
    }
  }

  void note(const std::string& msg) const {
    if (log_) log_(msg);
  }

  void require_prepared() const { UNMT_CHECK(res_, "trainer: prepare() must run first"); }

  static std::string format_fixed(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
  }

  static double mean(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }

  std::vector<Words> sample(const std::vector<Words>& corpus, Rng& rng) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (!corpus[i].empty()) idx.push_back(i);
    rng.shuffle(idx);
    idx.resize(std::min(idx.size(), cfg_.sub_dataset_size));
    std::vector<Words> out;
    for (std::size_t i : idx) out.push_back(corpus[i]);
    return out;
  }

  // Random order, then a stable sort by target length: consecutive training
  // batches hold pairs of similar length.
  static void bucket_by_length(std::vector<std::pair<Sentence, Sentence>>& pairs, Rng& rng) {
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pairs[a].second.size() < pairs[b].second.size(); });
    std::vector<std::pair<Sentence, Sentence>> out;
    out.reserve(pairs.size());
    for (std::size_t i : order) out.push_back(std::move(pairs[i]));
    pairs = std::move(out);
  }

  // (model output, real input) pairs: the output becomes the pseudo-source
  // of the opposite direction.
  std::vector<std::pair<Sentence, Sentence>> back_translate(const Seq2SeqModel& model, const std::vector<Sentence>& real) const {
    std::vector<std::pair<Sentence, Sentence>> out(real.size());
    parallel_for(real.size(), [&](std::size_t i) {
      out[i].first = model.beam_decode(real[i], cfg_.beam_train, Seq2SeqModel::default_max_len(real[i])).tokens;
      out[i].second = real[i];
    });
    return out;
  }

  std::pair<std::vector<Words>, std::vector<Words>> dev_subset() const {
    std::size_t n = cfg_.dev_limit ? std::min(cfg_.dev_limit, data_.dev_x.size()) : data_.dev_x.size();
    return {std::vector<Words>(data_.dev_x.begin(), data_.dev_x.begin() + static_cast<long>(n)),
            std::vector<Words>(data_.dev_y.begin(), data_.dev_y.begin() + static_cast<long>(n))};
  }

  double translate_bleu(const Seq2SeqModel& model, const Vocabulary& vs, const Vocabulary& vt, const std::vector<Words>& src,
                        const std::vector<Words>& ref) const {
    if (src.empty()) return 0;
    std::vector<Words> hyp(src.size());
    parallel_for(src.size(), [&](std::size_t i) {
      Sentence s = vs.encode(src[i]);
      hyp[i] = vt.decode(model.beam_decode(s, cfg_.beam_eval, Seq2SeqModel::default_max_len(s)).tokens);
    });
    return bleu(hyp, ref).score;
  }

  void checkpoint(const EpochRecord& rec) const {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(cfg_.output_dir) / ("epoch_" + std::to_string(rec.epoch));
    fs::create_directories(dir);
    fwd_.save((dir / "forward.ckpt").string());
    bwd_.save((dir / "backward.ckpt").string());
    write_lines((dir / "state.txt").string(),
                {"epoch=" + std::to_string(rec.epoch), "seed=" + std::to_string(cfg_.seed), "mode=" + to_string(cfg_.mode),
                 "dev_bleu_xy=" + format_double(rec.bleu_xy), "dev_bleu_yx=" + format_double(rec.bleu_yx),
                 "mean_weight_xy=" + format_double(rec.mean_weight_xy), "mean_weight_yx=" + format_double(rec.mean_weight_yx),
                 "train_loss_xy=" + format_double(rec.loss_xy), "train_loss_yx=" + format_double(rec.loss_yx)});
    std::ofstream(fs::path(cfg_.output_dir) / "history.csv", std::ios::binary) << emit_curves(to_curves(history_));
  }

  TrainerConfig cfg_;
  TrainingData data_;
  Logger log_;
  std::shared_ptr<const Resources> res_;
  Seq2SeqModel fwd_, bwd_;
  std::vector<EpochRecord> history_;
  std::pair<double, double> smt_bleu_{0, 0};
  std::size_t smt_generations_ = 0, nmt_generations_ = 0;
};

}  // namespace unmt

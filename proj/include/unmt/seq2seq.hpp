#pragma once

// Attention-based recurrent encoder-decoder.
//
// Encoder: forward and backward tanh RNNs over source embeddings; position j
// is annotated with h_j = [f_j; b_j].
// Decoder: s_t = tanh(W_dec [E_y(y_{t-1}); c_{t-1}] + U_dec s_{t-1} + b_dec),
// attention a_t = softmax_j(s_t' W_att h_j), context c_t = sum_j a_tj h_j,
// o_t = tanh(W_out [s_t; c_t] + b_out), P(. | y_<t, x) = softmax(W_proj o_t + b_proj).
// s_0 = tanh(W_init mean_j(h_j) + b_init), c_0 = 0.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "unmt/binary_io.hpp"
#include "unmt/corpus.hpp"
#include "unmt/rng.hpp"

namespace unmt {

struct TrainPair {
  Sentence x, y;
  double weight = 1.0;
};

struct Seq2SeqHyper {
  int dim = 64;
  double learning_rate = 0.05;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

enum Block : std::size_t {
  kSrcEmb,
  kTgtEmb,
  kEncFwdW,
  kEncFwdU,
  kEncFwdB,
  kEncBwdW,
  kEncBwdU,
  kEncBwdB,
  kInitW,
  kInitB,
  kDecW,
  kDecU,
  kDecB,
  kAttW,
  kOutW,
  kOutB,
  kProjW,
  kProjB,
  kBlockCount
};

inline constexpr std::array<const char*, kBlockCount> kBlockNames = {
    "src_emb", "tgt_emb", "enc_fwd_w", "enc_fwd_u", "enc_fwd_b", "enc_bwd_w", "enc_bwd_u", "enc_bwd_b", "init_w",
    "init_b",  "dec_w",   "dec_u",     "dec_b",     "att_w",     "out_w",     "out_b",     "proj_w",    "proj_b"};

// Parameter blocks (biases are column vectors).
struct ParamSet {
  std::array<Eigen::MatrixXd, kBlockCount> blocks;

  Eigen::MatrixXd& operator[](std::size_t b) { return blocks[b]; }
  const Eigen::MatrixXd& operator[](std::size_t b) const { return blocks[b]; }

  ParamSet zeros_like() const {
    ParamSet z;
    for (std::size_t b = 0; b < kBlockCount; ++b) z.blocks[b] = Eigen::MatrixXd::Zero(blocks[b].rows(), blocks[b].cols());
    return z;
  }
  double squared_norm() const {
    double s = 0;
    for (const auto& m : blocks) s += m.squaredNorm();
    return s;
  }
  bool all_finite() const {
    for (const auto& m : blocks)
      if (!m.allFinite()) return false;
    return true;
  }
  void add_scaled(const ParamSet& o, double c) {
    for (std::size_t b = 0; b < kBlockCount; ++b) blocks[b] += c * o.blocks[b];
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& m : blocks) n += static_cast<std::size_t>(m.size());
    return n;
  }
};

struct Gradient {
  ParamSet grad;
  double loss = 0;          // weighted NLL / sum of weights
  double weight_sum = 0;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;

  Seq2SeqModel(Vocabulary vx, Vocabulary vy, const Seq2SeqHyper& hyper) : vx_(std::move(vx)), vy_(std::move(vy)), hyper_(hyper) {
    UNMT_CHECK(hyper.dim >= 2, "seq2seq: dim must be >= 2, got " << hyper.dim);
    UNMT_CHECK(hyper.learning_rate > 0 && hyper.clip_norm > 0, "seq2seq: learning rate and clip norm must be > 0");
    const Eigen::Index d = hyper.dim, a = 2 * d;
    const auto nx = static_cast<Eigen::Index>(vx_.size()), ny = static_cast<Eigen::Index>(vy_.size());
    const std::array<std::pair<Eigen::Index, Eigen::Index>, kBlockCount> shapes = {{
        {nx, d}, {ny, d}, {d, d}, {d, d}, {d, 1}, {d, d}, {d, d}, {d, 1}, {d, a}, {d, 1},
        {d, d + a}, {d, d}, {d, 1}, {d, a}, {d, d + a}, {d, 1}, {ny, d}, {ny, 1},
    }};
    Rng rng(hyper.seed);
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      auto& m = params_[b];
      m.resize(shapes[b].first, shapes[b].second);
      // Column-major fill order is part of the determinism contract.
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-0.08, 0.08);
    }
  }

  const Vocabulary& source_vocab() const { return vx_; }
  const Vocabulary& target_vocab() const { return vy_; }
  const Seq2SeqHyper& hyper() const { return hyper_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Sum over target steps (including <eos>) of log P(y_t | y_<t, x).
  double log_prob(const Sentence& x, const Sentence& y) const {
    Encoded enc = encode(x);
    Eigen::VectorXd s = enc.s0, c = Eigen::VectorXd::Zero(2 * hyper_.dim);
    double lp = 0;
    TokenId prev = special::kBos;
    for (std::size_t t = 0; t <= y.size(); ++t) {
      TokenId gold = t < y.size() ? y[t] : special::kEos;
      check_target(gold);
      Eigen::VectorXd logp = step(enc, prev, s, c);
      lp += logp(gold);
      prev = gold;
    }
    return lp;
  }

  // log P(y) under the decoder with the one-token <dummy> source.
  double decoder_lm_log_prob(const Sentence& y) const { return log_prob(Sentence{special::kDummy}, y); }

  // Teacher-forced next-token distributions, one per target step.
  std::vector<Eigen::VectorXd> step_distributions(const Sentence& x, const Sentence& y) const {
    Encoded enc = encode(x);
    Eigen::VectorXd s = enc.s0, c = Eigen::VectorXd::Zero(2 * hyper_.dim);
    std::vector<Eigen::VectorXd> out;
    TokenId prev = special::kBos;
    for (std::size_t t = 0; t <= y.size(); ++t) {
      out.push_back(step(enc, prev, s, c).array().exp());
      prev = t < y.size() ? y[t] : special::kEos;
    }
    return out;
  }

  // Gradient of sum_i w_i * nll_i / sum_i w_i. Pairs are processed in fixed
  // chunks and chunk sums are added in order, so the result does not depend
  // on the worker count.
  Gradient compute_gradient(const std::vector<TrainPair>& batch) const {
    UNMT_CHECK(!batch.empty(), "seq2seq: empty batch");
    double wsum = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      UNMT_CHECK(batch[i].weight > 0 && std::isfinite(batch[i].weight),
                 "seq2seq: pair " << i << " has invalid weight " << batch[i].weight);
      wsum += batch[i].weight;
    }
    constexpr std::size_t kChunk = 8;
    std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<ParamSet> partial(chunks);
    std::vector<double> loss(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t c) {
      partial[c] = params_.zeros_like();
      for (std::size_t i = c * kChunk; i < std::min(batch.size(), (c + 1) * kChunk); ++i)
        loss[c] += batch[i].weight * backprop(batch[i].x, batch[i].y, batch[i].weight / wsum, partial[c]);
    });
    Gradient g;
    g.grad = std::move(partial[0]);
    g.loss = loss[0];
    for (std::size_t c = 1; c < chunks; ++c) {
      g.grad.add_scaled(partial[c], 1.0);
      g.loss += loss[c];
    }
    g.loss /= wsum;
    g.weight_sum = wsum;
    return g;
  }

  // Clips the gradient to the global norm limit and takes one SGD step.
  void apply(Gradient g, double learning_rate) {
    double norm = std::sqrt(g.grad.squared_norm());
    if (!std::isfinite(norm)) throw TrainingError("seq2seq: non-finite gradient norm");
    if (norm > hyper_.clip_norm) g.grad.add_scaled(g.grad, hyper_.clip_norm / norm - 1.0);
    params_.add_scaled(g.grad, -learning_rate);
    if (!params_.all_finite()) throw TrainingError("seq2seq: parameters became non-finite");
  }

  // One weighted-likelihood step; returns the loss before the update.
  double train_batch(const std::vector<TrainPair>& batch, double learning_rate, std::size_t batch_id) {
    Gradient g = compute_gradient(batch);
    if (!std::isfinite(g.loss)) throw TrainingError("seq2seq: non-finite loss in batch " + std::to_string(batch_id));
    double loss = g.loss;
    apply(std::move(g), learning_rate);
    return loss;
  }
  double train_batch(const std::vector<TrainPair>& batch) { return train_batch(batch, hyper_.learning_rate, 0); }

  struct Decoded {
    Sentence tokens;
    double log_prob = 0;
  };

  Decoded greedy_decode(const Sentence& x, std::size_t max_len) const {
    Encoded enc = encode(x);
    Eigen::VectorXd s = enc.s0, c = Eigen::VectorXd::Zero(2 * hyper_.dim);
    Decoded out;
    TokenId prev = special::kBos;
    for (std::size_t t = 0;; ++t) {
      Eigen::VectorXd logp = step(enc, prev, s, c);
      TokenId best = t >= max_len ? special::kEos : best_token(logp);
      out.log_prob += logp(best);
      if (best == special::kEos) return out;
      out.tokens.push_back(best);
      prev = best;
    }
  }

  // Beam search by total log-probability. Candidates tie-break towards lower
  // token ids; at max_len every open hypothesis is closed with <eos>. The
  // greedy hypothesis is also considered, so the result never scores below it.
  Decoded beam_decode(const Sentence& x, std::size_t beam_size, std::size_t max_len) const {
    UNMT_CHECK(beam_size >= 1, "seq2seq: beam_size must be >= 1");
    Encoded enc = encode(x);
    struct Beam {
      Sentence tokens;
      double score;
      Eigen::VectorXd s, c;
    };
    std::vector<Beam> alive = {{{}, 0.0, enc.s0, Eigen::VectorXd::Zero(2 * hyper_.dim)}};
    Decoded best;
    best.log_prob = -std::numeric_limits<double>::infinity();
    auto consider = [&](Sentence tokens, double score) {
      if (score > best.log_prob || (score == best.log_prob && tokens < best.tokens)) {
        best.tokens = std::move(tokens);
        best.log_prob = score;
      }
    };
    for (std::size_t t = 0; !alive.empty(); ++t) {
      struct Cand {
        double score;
        std::size_t beam;
        TokenId tok;
      };
      std::vector<Cand> cands;
      std::vector<Eigen::VectorXd> next_s(alive.size()), next_c(alive.size());
      for (std::size_t b = 0; b < alive.size(); ++b) {
        next_s[b] = alive[b].s;
        next_c[b] = alive[b].c;
        TokenId prev = alive[b].tokens.empty() ? special::kBos : alive[b].tokens.back();
        Eigen::VectorXd logp = step(enc, prev, next_s[b], next_c[b]);
        if (t >= max_len) {
          consider(alive[b].tokens, alive[b].score + logp(special::kEos));
          continue;
        }
        for (Eigen::Index k = 0; k < logp.size(); ++k)
          if (emittable(static_cast<TokenId>(k))) cands.push_back({alive[b].score + logp(k), b, static_cast<TokenId>(k)});
      }
      if (t >= max_len) break;
      std::size_t keep = std::min(beam_size, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), [&](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (alive[a.beam].tokens != alive[b.beam].tokens) return alive[a.beam].tokens < alive[b.beam].tokens;
        return a.tok < b.tok;
      });
      std::vector<Beam> next;
      for (std::size_t i = 0; i < keep; ++i) {
        const auto& cd = cands[i];
        if (cd.tok == special::kEos) {
          consider(alive[cd.beam].tokens, cd.score);
          continue;
        }
        Sentence toks = alive[cd.beam].tokens;
        toks.push_back(cd.tok);
        next.push_back({std::move(toks), cd.score, next_s[cd.beam], next_c[cd.beam]});
      }
      // Scores only fall as hypotheses grow.
      while (!next.empty() && next.back().score < best.log_prob) next.pop_back();
      alive = std::move(next);
    }
    Decoded greedy = greedy_decode(x, max_len);
    consider(greedy.tokens, greedy.log_prob);
    return best;
  }

  static std::size_t default_max_len(const Sentence& x) { return 2 * x.size() + 5; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    UNMT_CHECK(out, "cannot write " << path);
    io::put_magic(out, "UNMTS2S1");
    io::put<std::uint32_t>(out, 1);
    io::put<std::int32_t>(out, hyper_.dim);
    io::put<double>(out, hyper_.learning_rate);
    io::put<double>(out, hyper_.clip_norm);
    io::put<std::uint64_t>(out, hyper_.seed);
    for (const auto* v : {&vx_, &vy_}) {
      io::put<std::uint32_t>(out, static_cast<std::uint32_t>(v->size()));
      for (const auto& t : v->tokens()) io::put_string(out, t);
    }
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(kBlockCount));
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      const auto& m = params_[b];
      io::put_string(out, kBlockNames[b]);
      io::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      io::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) io::put<double>(out, m(i, j));
    }
    UNMT_CHECK(out, "write failed for " << path);
  }

  static Seq2SeqModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    UNMT_CHECK(in, "cannot open " << path);
    io::expect_magic(in, "UNMTS2S1", path);
    auto version = io::get<std::uint32_t>(in);
    UNMT_CHECK(version == 1, path << ": unsupported checkpoint version " << version);
    Seq2SeqModel m;
    m.hyper_.dim = io::get<std::int32_t>(in);
    m.hyper_.learning_rate = io::get<double>(in);
    m.hyper_.clip_norm = io::get<double>(in);
    m.hyper_.seed = io::get<std::uint64_t>(in);
    for (auto* v : {&m.vx_, &m.vy_}) {
      auto n = io::get<std::uint32_t>(in);
      for (std::uint32_t i = 0; i < n; ++i) {
        auto tok = io::get_string(in);
        if (i < static_cast<std::uint32_t>(special::kCount)) {
          UNMT_CHECK(tok == v->token(static_cast<TokenId>(i)), path << ": special token mismatch");
        } else {
          v->add(tok);
        }
      }
      UNMT_CHECK(v->size() == n, path << ": duplicate vocabulary entries");
    }
    auto blocks = io::get<std::uint32_t>(in);
    UNMT_CHECK(blocks == kBlockCount, path << ": expected " << kBlockCount << " parameter blocks, found " << blocks);
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      auto name = io::get_string(in);
      UNMT_CHECK(name == kBlockNames[b], path << ": expected block '" << kBlockNames[b] << "', found '" << name << "'");
      auto rows = static_cast<Eigen::Index>(io::get<std::uint64_t>(in));
      auto cols = static_cast<Eigen::Index>(io::get<std::uint64_t>(in));
      auto& p = m.params_[b];
      p.resize(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) p(i, j) = io::get<double>(in);
    }
    return m;
  }

 private:
  struct Encoded {
    Sentence x;
    Eigen::MatrixXd fwd, bwd;  // d x n hidden states
    Eigen::MatrixXd H;         // 2d x n annotations
    Eigen::VectorXd mean, s0;
  };

  static bool emittable(TokenId t) { return t != special::kPad && t != special::kBos && t != special::kDummy; }

  static TokenId best_token(const Eigen::VectorXd& logp) {
    TokenId best = special::kEos;
    for (Eigen::Index k = 0; k < logp.size(); ++k)
      if (emittable(static_cast<TokenId>(k)) && (logp(k) > logp(best) || (logp(k) == logp(best) && k < best)))
        best = static_cast<TokenId>(k);
    return best;
  }

  void check_target(TokenId t) const {
    UNMT_CHECK(t >= 0 && static_cast<std::size_t>(t) < vy_.size(), "seq2seq: target id " << t << " out of range");
  }

  Encoded encode(Sentence x) const {
    if (x.empty()) x = {special::kDummy};
    const Eigen::Index d = hyper_.dim;
    const auto n = static_cast<Eigen::Index>(x.size());
    for (TokenId t : x) UNMT_CHECK(t >= 0 && static_cast<std::size_t>(t) < vx_.size(), "seq2seq: source id " << t << " out of range");
    Encoded e;
    e.fwd.resize(d, n);
    e.bwd.resize(d, n);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < n; ++j) {
      h = (params_[kEncFwdW] * params_[kSrcEmb].row(x[static_cast<std::size_t>(j)]).transpose() + params_[kEncFwdU] * h +
           params_[kEncFwdB].col(0)).array().tanh();
      e.fwd.col(j) = h;
    }
    h.setZero();
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      h = (params_[kEncBwdW] * params_[kSrcEmb].row(x[static_cast<std::size_t>(j)]).transpose() + params_[kEncBwdU] * h +
           params_[kEncBwdB].col(0)).array().tanh();
      e.bwd.col(j) = h;
    }
    e.H.resize(2 * d, n);
    e.H.topRows(d) = e.fwd;
    e.H.bottomRows(d) = e.bwd;
    e.mean = e.H.rowwise().mean();
    e.s0 = (params_[kInitW] * e.mean + params_[kInitB].col(0)).array().tanh();
    e.x = std::move(x);
    return e;
  }

  // Advances (s, c) by one decoder step fed with `prev`; returns log-probs.
  Eigen::VectorXd step(const Encoded& enc, TokenId prev, Eigen::VectorXd& s, Eigen::VectorXd& c) const {
    const Eigen::Index d = hyper_.dim;
    Eigen::VectorXd u(3 * d);
    u.head(d) = params_[kTgtEmb].row(prev).transpose();
    u.tail(2 * d) = c;
    s = (params_[kDecW] * u + params_[kDecU] * s + params_[kDecB].col(0)).array().tanh();
    Eigen::VectorXd q = params_[kAttW].transpose() * s;
    Eigen::VectorXd e = enc.H.transpose() * q;
    Eigen::VectorXd a = (e.array() - e.maxCoeff()).exp();
    a /= a.sum();
    c = enc.H * a;
    Eigen::VectorXd sc(3 * d);
    sc.head(d) = s;
    sc.tail(2 * d) = c;
    Eigen::VectorXd o = (params_[kOutW] * sc + params_[kOutB].col(0)).array().tanh();
    Eigen::VectorXd logits = params_[kProjW] * o + params_[kProjB].col(0);
    double mx = logits.maxCoeff();
    double lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
  }

  // Adds scale * d(nll)/d(theta) into g and returns nll.
  double backprop(const Sentence& x_in, const Sentence& y, double scale, ParamSet& g) const {
    const Eigen::Index d = hyper_.dim;
    Encoded enc = encode(x_in);
    const auto n = static_cast<Eigen::Index>(enc.x.size());
    const std::size_t T = y.size() + 1;

    std::vector<Eigen::VectorXd> us(T), ss(T + 1), as(T), cs(T), scs(T), os(T), ps(T);
    std::vector<TokenId> gold(T);
    ss[0] = enc.s0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * d);
    double nll = 0;
    TokenId prev = special::kBos;
    for (std::size_t t = 0; t < T; ++t) {
      gold[t] = t < y.size() ? y[t] : special::kEos;
      check_target(gold[t]);
      us[t].resize(3 * d);
      us[t].head(d) = params_[kTgtEmb].row(prev).transpose();
      us[t].tail(2 * d) = c;
      ss[t + 1] = (params_[kDecW] * us[t] + params_[kDecU] * ss[t] + params_[kDecB].col(0)).array().tanh();
      Eigen::VectorXd e = enc.H.transpose() * (params_[kAttW].transpose() * ss[t + 1]);
      as[t] = (e.array() - e.maxCoeff()).exp();
      as[t] /= as[t].sum();
      c = enc.H * as[t];
      cs[t] = c;
      scs[t].resize(3 * d);
      scs[t].head(d) = ss[t + 1];
      scs[t].tail(2 * d) = c;
      os[t] = (params_[kOutW] * scs[t] + params_[kOutB].col(0)).array().tanh();
      Eigen::VectorXd logits = params_[kProjW] * os[t] + params_[kProjB].col(0);
      double mx = logits.maxCoeff();
      ps[t] = (logits.array() - mx).exp();
      double z = ps[t].sum();
      ps[t] /= z;
      nll -= logits(gold[t]) - mx - std::log(z);
      prev = gold[t];
    }

    Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(2 * d, n);
    Eigen::VectorXd ds_next = Eigen::VectorXd::Zero(d), dc_next = Eigen::VectorXd::Zero(2 * d);
    for (std::size_t t = T; t-- > 0;) {
      Eigen::VectorXd dlogits = ps[t];
      dlogits(gold[t]) -= 1.0;
      dlogits *= scale;
      g[kProjW].noalias() += dlogits * os[t].transpose();
      g[kProjB].col(0) += dlogits;
      Eigen::VectorXd dzo = (params_[kProjW].transpose() * dlogits).array() * (1.0 - os[t].array().square());
      g[kOutW].noalias() += dzo * scs[t].transpose();
      g[kOutB].col(0) += dzo;
      Eigen::VectorXd dsc = params_[kOutW].transpose() * dzo;
      Eigen::VectorXd dc = dsc.tail(2 * d) + dc_next;
      Eigen::VectorXd ds = dsc.head(d) + ds_next;
      // Attention.
      dH.noalias() += dc * as[t].transpose();
      Eigen::VectorXd da = enc.H.transpose() * dc;
      Eigen::VectorXd de = as[t].array() * (da.array() - as[t].dot(da));
      Eigen::VectorXd q = params_[kAttW].transpose() * ss[t + 1];
      dH.noalias() += q * de.transpose();
      Eigen::VectorXd dq = enc.H * de;
      g[kAttW].noalias() += ss[t + 1] * dq.transpose();
      ds += params_[kAttW] * dq;
      // Recurrence.
      Eigen::VectorXd dz = ds.array() * (1.0 - ss[t + 1].array().square());
      g[kDecW].noalias() += dz * us[t].transpose();
      g[kDecU].noalias() += dz * ss[t].transpose();
      g[kDecB].col(0) += dz;
      Eigen::VectorXd du = params_[kDecW].transpose() * dz;
      TokenId fed = t == 0 ? special::kBos : gold[t - 1];
      g[kTgtEmb].row(fed) += du.head(d).transpose();
      dc_next = du.tail(2 * d);
      ds_next = params_[kDecU].transpose() * dz;
    }
    // Initial state from the mean annotation.
    Eigen::VectorXd dz0 = ds_next.array() * (1.0 - enc.s0.array().square());
    g[kInitW].noalias() += dz0 * enc.mean.transpose();
    g[kInitB].col(0) += dz0;
    Eigen::VectorXd dmean = params_[kInitW].transpose() * dz0 / static_cast<double>(n);
    dH.colwise() += dmean;

    // Encoder RNNs.
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      Eigen::VectorXd dz = (dH.col(j).head(d) + carry).array() * (1.0 - enc.fwd.col(j).array().square());
      TokenId tok = enc.x[static_cast<std::size_t>(j)];
      g[kEncFwdW].noalias() += dz * params_[kSrcEmb].row(tok);
      if (j > 0) g[kEncFwdU].noalias() += dz * enc.fwd.col(j - 1).transpose();
      g[kEncFwdB].col(0) += dz;
      g[kSrcEmb].row(tok) += (params_[kEncFwdW].transpose() * dz).transpose();
      carry = params_[kEncFwdU].transpose() * dz;
    }
    carry.setZero();
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd dz = (dH.col(j).tail(d) + carry).array() * (1.0 - enc.bwd.col(j).array().square());
      TokenId tok = enc.x[static_cast<std::size_t>(j)];
      g[kEncBwdW].noalias() += dz * params_[kSrcEmb].row(tok);
      if (j + 1 < n) g[kEncBwdU].noalias() += dz * enc.bwd.col(j + 1).transpose();
      g[kEncBwdB].col(0) += dz;
      g[kSrcEmb].row(tok) += (params_[kEncBwdW].transpose() * dz).transpose();
      carry = params_[kEncBwdU].transpose() * dz;
    }
    return nll;
  }

  Vocabulary vx_, vy_;
  Seq2SeqHyper hyper_;
  ParamSet params_;
};

}  // namespace unmt

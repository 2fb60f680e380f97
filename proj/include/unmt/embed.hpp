#pragma once

// Monolingual word vectors from positive PMI co-occurrence statistics and a
// truncated eigendecomposition, orthogonal cross-lingual mapping, and the
// softmax-over-cosines word translation distribution.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <unordered_map>

#include "unmt/common.hpp"
#include "unmt/eval.hpp"
#include "unmt/rng.hpp"

namespace unmt {

class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(std::vector<std::string> words, Eigen::MatrixXd matrix, std::vector<std::size_t> counts = {})
      : words_(std::move(words)), matrix_(std::move(matrix)), counts_(std::move(counts)) {
    UNMT_CHECK(static_cast<Eigen::Index>(words_.size()) == matrix_.rows(), "embedding: word list and matrix disagree");
    if (counts_.empty()) counts_.assign(words_.size(), 0);
    for (std::size_t i = 0; i < words_.size(); ++i) {
      UNMT_CHECK(index_.emplace(words_[i], static_cast<int>(i)).second, "embedding: duplicate word '" << words_[i] << "'");
    }
  }

  std::size_t size() const { return words_.size(); }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  const std::vector<std::string>& words() const { return words_; }
  // Corpus frequency of each row (zero when loaded from a file).
  const std::vector<std::size_t>& counts() const { return counts_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  Eigen::VectorXd row(int i) const { return matrix_.row(i).transpose(); }

  int find(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? -1 : it->second;
  }
  int index(const std::string& w) const {
    int i = find(w);
    UNMT_CHECK(i >= 0, "embedding: unknown word '" << w << "'");
    return i;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    UNMT_CHECK(out, "cannot write " << path);
    out << words_.size() << ' ' << matrix_.cols() << '\n';
    for (std::size_t i = 0; i < words_.size(); ++i) {
      out << words_[i];
      for (Eigen::Index j = 0; j < matrix_.cols(); ++j) out << ' ' << format_double(matrix_(static_cast<Eigen::Index>(i), j));
      out << '\n';
    }
  }

  static EmbeddingSpace load(const std::string& path) {
    auto lines = read_lines(path);
    UNMT_CHECK(!lines.empty(), path << ": empty embedding file");
    auto header = split_ws(lines[0]);
    UNMT_CHECK(header.size() == 2, path << ": header must be 'count dim'");
    std::size_t n = std::stoul(header[0]);
    auto d = static_cast<Eigen::Index>(std::stoul(header[1]));
    UNMT_CHECK(lines.size() >= n + 1, path << ": expected " << n << " rows");
    std::vector<std::string> words;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
      auto f = split_ws(lines[i + 1]);
      UNMT_CHECK(static_cast<Eigen::Index>(f.size()) == d + 1, path << ":" << i + 2 << ": expected " << d + 1 << " fields");
      words.push_back(f[0]);
      for (Eigen::Index j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), j) = std::strtod(f[static_cast<std::size_t>(j + 1)].c_str(), nullptr);
    }
    return EmbeddingSpace(std::move(words), std::move(m));
  }

 private:
  std::vector<std::string> words_;
  Eigen::MatrixXd matrix_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, int> index_;
};

// Flips each column so its largest-magnitude entry (first on ties) is positive.
inline void fix_column_signs(Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < m.rows(); ++i)
      if (std::abs(m(i, j)) > std::abs(m(best, j))) best = i;
    if (m(best, j) < 0) m.col(j) *= -1.0;
  }
}

inline void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double n = m.row(i).norm();
    if (n > 0) {
      m.row(i) /= n;
    } else {
      m.row(i).setConstant(1.0 / std::sqrt(static_cast<double>(m.cols())));
    }
  }
}

struct EmbedOptions {
  int dim = 64;
  int window = 2;
  std::size_t min_count = 1;
  // Context counts are raised to this power before computing PMI.
  double context_smoothing = 0.75;
  // Eigenvector columns are scaled by |eigenvalue|^eigen_power.
  double eigen_power = 0.5;
  // Subtract the mean row and renormalize.
  bool center = true;
};

// Rows are ordered by descending corpus frequency, ties lexicographic.
inline EmbeddingSpace train_embeddings(const std::vector<Words>& corpus, const EmbedOptions& opt) {
  UNMT_CHECK(opt.window >= 1, "embed: window must be >= 1");
  UNMT_CHECK(opt.dim >= 1, "embed: dim must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus)
    for (const auto& w : s) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [w, c] : freq)
    if (c >= opt.min_count) ranked.emplace_back(w, c);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  UNMT_CHECK(ranked.size() >= 2, "embed: degenerate corpus with " << ranked.size() << " distinct word(s)");
  UNMT_CHECK(static_cast<std::size_t>(opt.dim) <= ranked.size(),
             "embed: dim " << opt.dim << " exceeds vocabulary size " << ranked.size());

  std::unordered_map<std::string, int> idx;
  std::vector<std::string> words;
  std::vector<std::size_t> counts;
  for (const auto& [w, c] : ranked) {
    idx.emplace(w, static_cast<int>(words.size()));
    words.push_back(w);
    counts.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd cooc = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> ids;
  for (const auto& s : corpus) {
    ids.clear();
    for (const auto& w : s) {
      auto it = idx.find(w);
      ids.push_back(it == idx.end() ? -1 : it->second);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) continue;
      for (std::size_t j = i + 1; j < ids.size() && j <= i + static_cast<std::size_t>(opt.window); ++j) {
        if (ids[j] < 0) continue;
        cooc(ids[i], ids[j]) += 1.0;
        cooc(ids[j], ids[i]) += 1.0;
      }
    }
  }
  Eigen::VectorXd marg = cooc.rowwise().sum();
  double total = marg.sum();
  UNMT_CHECK(total > 0, "embed: corpus has no co-occurrences within the window");
  Eigen::VectorXd ctx = marg.array().pow(opt.context_smoothing);
  double ctx_total = ctx.sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (cooc(i, j) > 0)
        ppmi(i, j) = std::max(0.0, std::log(cooc(i, j) * ctx_total / (marg(i) * ctx(j))));
  // Smoothing makes PPMI asymmetric; the eigensolver needs a symmetric input.
  ppmi = 0.5 * (ppmi + ppmi.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ppmi);
  UNMT_CHECK(eig.info() == Eigen::Success, "embed: eigendecomposition failed");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const auto& vals = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(vals(a)) > std::abs(vals(b)); });
  Eigen::MatrixXd vecs(n, opt.dim);
  for (int k = 0; k < opt.dim; ++k) vecs.col(k) = eig.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  fix_column_signs(vecs);
  for (int k = 0; k < opt.dim; ++k) vecs.col(k) *= std::pow(std::abs(vals(order[static_cast<std::size_t>(k)])), opt.eigen_power);
  normalize_rows(vecs);
  if (opt.center) {
    Eigen::RowVectorXd mean = vecs.colwise().mean();
    vecs.rowwise() -= mean;
    normalize_rows(vecs);
  }
  return EmbeddingSpace(std::move(words), std::move(vecs), std::move(counts));
}

struct DictEntry {
  int x = 0;
  int y = 0;
  double cosine = 0;
};

struct CrossLingualMap {
  Eigen::MatrixXd M;  // maps source rows into the target space: M * e_x
  std::vector<DictEntry> induced;

  double mean_cosine() const {
    if (induced.empty()) return 0.0;
    double s = 0;
    for (const auto& e : induced) s += e.cosine;
    return s / static_cast<double>(induced.size());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    UNMT_CHECK(out, "cannot write " << path);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? " " : "") << format_double(M(i, j));
      out << '\n';
    }
  }

  static CrossLingualMap load(const std::string& path) {
    auto lines = read_lines(path);
    std::vector<std::vector<double>> rows;
    for (const auto& l : lines) {
      auto f = split_ws(l);
      if (f.empty()) continue;
      std::vector<double> r;
      for (const auto& v : f) r.push_back(std::strtod(v.c_str(), nullptr));
      rows.push_back(std::move(r));
    }
    UNMT_CHECK(!rows.empty(), path << ": empty mapping file");
    auto d = static_cast<Eigen::Index>(rows.size());
    CrossLingualMap m;
    m.M.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      UNMT_CHECK(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) == d, path << ": mapping must be square");
      for (Eigen::Index j = 0; j < d; ++j) m.M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
  }
};

// Source rows mapped into the target space.
inline Eigen::MatrixXd mapped_source(const CrossLingualMap& map, const EmbeddingSpace& ex) {
  return ex.matrix() * map.M.transpose();
}

// Orthogonal M minimising sum ||M e_x - e_y||^2 over the seed pairs.
inline Eigen::MatrixXd procrustes(const EmbeddingSpace& ex, const EmbeddingSpace& ey, std::vector<std::pair<int, int>> seed) {
  UNMT_CHECK(!seed.empty(), "procrustes: empty seed dictionary");
  UNMT_CHECK(ex.dim() == ey.dim(), "procrustes: dimension mismatch " << ex.dim() << " vs " << ey.dim());
  std::sort(seed.begin(), seed.end());
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(ex.dim(), ex.dim());
  for (const auto& [x, y] : seed) {
    UNMT_CHECK(x >= 0 && static_cast<std::size_t>(x) < ex.size() && y >= 0 && static_cast<std::size_t>(y) < ey.size(),
               "procrustes: seed pair (" << x << ", " << y << ") out of range");
    cross.noalias() += ey.matrix().row(y).transpose() * ex.matrix().row(x);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

inline CrossLingualMap procrustes_map(const EmbeddingSpace& ex, const EmbeddingSpace& ey,
                                      const std::vector<std::pair<std::string, std::string>>& seed) {
  std::vector<std::pair<int, int>> ids;
  for (const auto& [a, b] : seed) ids.emplace_back(ex.index(a), ey.index(b));
  CrossLingualMap m;
  m.M = procrustes(ex, ey, ids);
  return m;
}

// Mutual nearest neighbours by cosine among the first `limit` rows of each side.
inline std::vector<DictEntry> mutual_nearest_neighbors(const Eigen::MatrixXd& mapped_x, const EmbeddingSpace& ey, std::size_t limit) {
  auto nx = static_cast<Eigen::Index>(std::min<std::size_t>(limit, static_cast<std::size_t>(mapped_x.rows())));
  auto ny = static_cast<Eigen::Index>(std::min<std::size_t>(limit, ey.size()));
  Eigen::MatrixXd sims = mapped_x.topRows(nx) * ey.matrix().topRows(ny).transpose();
  std::vector<Eigen::Index> best_y(static_cast<std::size_t>(nx)), best_x(static_cast<std::size_t>(ny));
  for (Eigen::Index i = 0; i < nx; ++i) sims.row(i).maxCoeff(&best_y[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < ny; ++j) sims.col(j).maxCoeff(&best_x[static_cast<std::size_t>(j)]);
  std::vector<DictEntry> out;
  for (Eigen::Index i = 0; i < nx; ++i) {
    Eigen::Index j = best_y[static_cast<std::size_t>(i)];
    if (best_x[static_cast<std::size_t>(j)] == i) out.push_back({static_cast<int>(i), static_cast<int>(j), sims(i, j)});
  }
  return out;
}

struct SelfLearningOptions {
  int rounds = 5;
  std::size_t induction_limit = 5000;
};

// Alternates a Procrustes fit on the current dictionary with mutual-nearest-
// neighbour induction. Stops early, keeping the previous round, if the mean
// cosine of the induced dictionary drops.
inline CrossLingualMap self_learning(const EmbeddingSpace& ex, const EmbeddingSpace& ey, std::vector<std::pair<int, int>> dict,
                                     const SelfLearningOptions& opt = {}) {
  UNMT_CHECK(opt.rounds >= 1, "self_learning: rounds must be >= 1");
  CrossLingualMap best;
  bool have_best = false;
  for (int r = 0; r < opt.rounds; ++r) {
    CrossLingualMap cur;
    cur.M = procrustes(ex, ey, dict);
    cur.induced = mutual_nearest_neighbors(mapped_source(cur, ex), ey, opt.induction_limit);
    UNMT_CHECK(!cur.induced.empty(), "self_learning: round " << r + 1 << " induced an empty dictionary from "
                                                              << dict.size() << " seed pairs");
    if (have_best && cur.mean_cosine() < best.mean_cosine()) break;
    dict.clear();
    for (const auto& e : cur.induced) dict.emplace_back(e.x, e.y);
    best = std::move(cur);
    have_best = true;
  }
  return best;
}

// Seed pairs for the unsupervised setting: words spelled identically in both
// spaces; with fewer than `min_identical` of those, the top `rank_pairs` words
// of each side paired by frequency rank.
inline std::vector<std::pair<int, int>> unsupervised_seed(const EmbeddingSpace& ex, const EmbeddingSpace& ey,
                                                          std::size_t min_identical = 25, std::size_t rank_pairs = 500) {
  std::vector<std::pair<int, int>> identical;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    int j = ey.find(ex.words()[i]);
    if (j >= 0) identical.emplace_back(static_cast<int>(i), j);
  }
  if (identical.size() >= min_identical) return identical;
  std::vector<std::pair<int, int>> ranked;
  std::size_t n = std::min({rank_pairs, ex.size(), ey.size()});
  for (std::size_t i = 0; i < n; ++i) ranked.emplace_back(static_cast<int>(i), static_cast<int>(i));
  return ranked;
}

struct UnsupervisedMapOptions {
  int chains = 4;
  int perturbations = 50;
  int rounds = 30;
  // Induction is restricted to the most frequent words: start + round * step
  // rows of each side.
  std::size_t induction_start = 20;
  std::size_t induction_step = 5;
  // Fraction of the current dictionary kept when a chain is perturbed.
  double keep_rate = 0.5;
  // Fraction of anchors each chain after the first starts from.
  double anchor_rate = 0.6;
  std::uint64_t seed = 1;
};

// Mean over source rows of the best target cosine; higher means the spaces
// are better aligned.
inline double alignment_score(const CrossLingualMap& map, const EmbeddingSpace& ex, const EmbeddingSpace& ey) {
  Eigen::MatrixXd sims = mapped_source(map, ex) * ey.matrix().transpose();
  return sims.rowwise().maxCoeff().mean();
}

namespace detail {

inline void add_pairs(std::vector<std::pair<int, int>>& dict, const std::vector<std::pair<int, int>>& extra) {
  dict.insert(dict.end(), extra.begin(), extra.end());
  std::sort(dict.begin(), dict.end());
  dict.erase(std::unique(dict.begin(), dict.end()), dict.end());
}

// Self-learning whose induction window widens by frequency each round; the
// anchors stay in every dictionary.
inline std::pair<CrossLingualMap, double> growing_self_learning(const EmbeddingSpace& ex, const EmbeddingSpace& ey,
                                                                std::vector<std::pair<int, int>> dict,
                                                                const std::vector<std::pair<int, int>>& anchors,
                                                                const UnsupervisedMapOptions& opt) {
  CrossLingualMap m;
  for (int r = 0; r < opt.rounds; ++r) {
    if (dict.empty()) dict = anchors;
    m.M = procrustes(ex, ey, dict);
    std::size_t limit = opt.induction_start + static_cast<std::size_t>(r) * opt.induction_step;
    dict.clear();
    for (const auto& e : mutual_nearest_neighbors(mapped_source(m, ex), ey, limit)) dict.emplace_back(e.x, e.y);
    add_pairs(dict, anchors);
  }
  m.M = procrustes(ex, ey, dict);
  return {m, alignment_score(m, ex, ey)};
}

}  // namespace detail

// Fully unsupervised mapping. Each chain runs frequency-growing
// self-learning from (a subset of) the identical-string anchors, then
// repeatedly drops a random part of its dictionary, re-runs self-learning and
// keeps the result when the alignment score improves. The best chain wins.
inline CrossLingualMap unsupervised_map(const EmbeddingSpace& ex, const EmbeddingSpace& ey, const UnsupervisedMapOptions& opt = {}) {
  UNMT_CHECK(opt.chains >= 1 && opt.rounds >= 1 && opt.perturbations >= 0, "unsupervised_map: invalid options");
  UNMT_CHECK(opt.keep_rate > 0 && opt.keep_rate <= 1 && opt.anchor_rate > 0 && opt.anchor_rate <= 1,
             "unsupervised_map: rates must lie in (0, 1]");
  auto anchors = unsupervised_seed(ex, ey);
  UNMT_CHECK(!anchors.empty(), "unsupervised_map: no seed pairs");
  std::vector<std::pair<CrossLingualMap, double>> results(static_cast<std::size_t>(opt.chains));
  parallel_for(results.size(), [&](std::size_t c) {
    Rng rng(opt.seed * 1000003ULL + c);
    std::vector<std::pair<int, int>> start;
    for (const auto& a : anchors)
      if (c == 0 || rng.bernoulli(opt.anchor_rate)) start.push_back(a);
    if (start.empty()) start = anchors;
    auto best = detail::growing_self_learning(ex, ey, start, start, opt);
    auto best_dict = mutual_nearest_neighbors(mapped_source(best.first, ex), ey, ex.size());
    for (int t = 0; t < opt.perturbations; ++t) {
      std::vector<std::pair<int, int>> d;
      for (const auto& e : best_dict)
        if (rng.bernoulli(opt.keep_rate)) d.emplace_back(e.x, e.y);
      auto cand = detail::growing_self_learning(ex, ey, d, start, opt);
      if (cand.second > best.second) {
        best = std::move(cand);
        best_dict = mutual_nearest_neighbors(mapped_source(best.first, ex), ey, ex.size());
      }
    }
    results[c] = std::move(best);
  });
  std::size_t win = 0;
  for (std::size_t c = 1; c < results.size(); ++c)
    if (results[c].second > results[win].second) win = c;
  CrossLingualMap out = std::move(results[win].first);
  out.induced = mutual_nearest_neighbors(mapped_source(out, ex), ey, std::max(ex.size(), ey.size()));
  return out;
}

// log-softmax of lambda * cosine over all target rows.
inline Eigen::VectorXd translation_log_probs(const Eigen::VectorXd& mapped_source_row, const Eigen::MatrixXd& targets, double lambda) {
  Eigen::VectorXd logits = lambda * (targets * mapped_source_row);
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

// P(y_j | x) = softmax_j(lambda * cos(M e_x, e_{y_j})).
inline std::vector<double> word_translation_prob(const CrossLingualMap& map, const EmbeddingSpace& ex, const EmbeddingSpace& ey,
                                                 const std::string& x, double lambda) {
  UNMT_CHECK(lambda >= 0, "word_translation_prob: lambda must be >= 0");
  int i = ex.find(x);
  UNMT_CHECK(i >= 0, "word_translation_prob: unknown source word '" << x << "'");
  Eigen::VectorXd v = map.M * ex.row(i);
  // Normalized directly rather than through the log form, so lambda = 0 is exactly uniform.
  Eigen::VectorXd logits = lambda * (ey.matrix() * v);
  Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  double z = e.sum();
  std::vector<double> p(static_cast<std::size_t>(e.size()));
  for (Eigen::Index j = 0; j < e.size(); ++j) p[static_cast<std::size_t>(j)] = e(j) / z;
  return p;
}

// Top-k cosine neighbours in the target space for every source word.
inline RankedLexicon translate_top_k(const CrossLingualMap& map, const EmbeddingSpace& ex, const EmbeddingSpace& ey, std::size_t k) {
  Eigen::MatrixXd sims = mapped_source(map, ex) * ey.matrix().transpose();
  RankedLexicon out;
  std::vector<int> order(ey.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
    std::size_t kk = std::min(k, order.size());
    auto row = static_cast<Eigen::Index>(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(kk), order.end(), [&](int a, int b) {
      double sa = sims(row, a), sb = sims(row, b);
      return sa != sb ? sa > sb : ey.words()[static_cast<std::size_t>(a)] < ey.words()[static_cast<std::size_t>(b)];
    });
    auto& list = out[ex.words()[i]];
    for (std::size_t j = 0; j < kk; ++j) list.push_back(ey.words()[static_cast<std::size_t>(order[j])]);
  }
  return out;
}

}  // namespace unmt

#ifndef HMVAE_ANALYSIS_HPP_
#define HMVAE_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hmvae/data.hpp"
#include "hmvae/distributions.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/model.hpp"
#include "hmvae/rng.hpp"

namespace hmvae {

/// Spatial map of one latent unit's generative effect, in data units when
/// standardization stats are supplied.
struct ProjectionMap {
  int unit_index = 0;
  ArrayXd values;
  bool sign_flipped = false;
  double threshold_sd = 2.0;
  std::vector<std::uint8_t> supra_mask;  // |z| >= threshold_sd per voxel
  bool empty_supra = false;              // set by align_and_threshold
};

namespace detail {

inline void refresh_supra_mask(ProjectionMap& map) {
  const double mean = map.values.mean();
  const double sd = std::sqrt((map.values - mean).square().mean());
  map.supra_mask.assign(map.values.size(), 0);
  if (sd == 0.0) return;
  for (Eigen::Index i = 0; i < map.values.size(); ++i)
    if (std::abs((map.values[i] - mean) / sd) >= map.threshold_sd) map.supra_mask[i] = 1;
}

}  // namespace detail

/// Finite-difference image of unit i: decoder mean at the prior center
/// nudged by one prior scale along unit i, minus the mean at the center.
inline ProjectionMap latent_projection(const ModelParams& params, int unit,
                                       const DataStats& stats = {},
                                       double threshold_sd = 2.0) {
  if (unit < 0 || unit >= params.latent_dim())
    throw ArgumentError("latent_projection: unit " + std::to_string(unit) +
                        " out of range for K=" + std::to_string(params.latent_dim()));
  VectorXd h0 = params.prior.center.matrix();
  VectorXd h1 = h0;
  h1[unit] += std::exp(params.prior.log_scale[unit]);
  const ArrayXd base = generate(h0, params).mean;
  const ArrayXd nudged = generate(h1, params).mean;
  ProjectionMap map;
  map.unit_index = unit;
  map.threshold_sd = threshold_sd;
  map.values = nudged - base;
  if (!stats.empty()) {
    if (stats.sd.size() != map.values.size())
      throw ShapeError("latent_projection: stats width mismatch");
    map.values *= stats.sd;  // means cancel in the difference
  }
  detail::refresh_supra_mask(map);
  return map;
}

/// Threshold at |z| >= threshold_sd and orient the map: if the mean of the
/// supra-threshold voxels is negative, negate the whole map. Idempotent.
inline ProjectionMap align_and_threshold(const ProjectionMap& p) {
  ProjectionMap map = p;
  detail::refresh_supra_mask(map);
  double supra_sum = 0;
  Eigen::Index supra_n = 0;
  for (Eigen::Index i = 0; i < map.values.size(); ++i)
    if (map.supra_mask[i]) {
      supra_sum += map.values[i];
      ++supra_n;
    }
  if (supra_n == 0) {
    map.empty_supra = true;
    return map;
  }
  map.empty_supra = false;
  if (supra_sum < 0) {
    map.values = -map.values;
    map.sign_flipped = true;
    detail::refresh_supra_mask(map);  // mask is |z|-based, unchanged by sign
  }
  return map;
}

/// Importance-sampled log marginal: log of the Monte Carlo estimate of
/// p(x | h_i = value), with the other units drawn from the approximate
/// posterior. Log-space throughout; reduction is log-sum-exp minus log M.
inline double marginal_importance_estimate(const ModelParams& params, int unit,
                                           double value, const VectorXd& x, int samples,
                                           std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("marginal_importance_estimate: M must be >= 1");
  if (unit < 0 || unit >= params.latent_dim())
    throw ArgumentError("marginal_importance_estimate: unit out of range");
  const LogisticDiag q = recognize(x, params);
  Rng rng(seed, streams::kSampler);
  std::vector<double> log_w(static_cast<std::size_t>(samples));
  for (int m = 0; m < samples; ++m) {
    ArrayXd h = logistic_sample(q, rng);
    h[unit] = value;
    const ArrayXd lp_prior = logistic_log_pdf(h, params.prior);
    const ArrayXd lq = logistic_log_pdf(h, q);
    double lw = gaussian_log_pdf(x.array(), generate(VectorXd(h.matrix()), params));
    for (Eigen::Index j = 0; j < h.size(); ++j)
      if (j != unit) lw += lp_prior[j] - lq[j];
    log_w[static_cast<std::size_t>(m)] = lw;
  }
  const double mx = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(mx)) return mx;  // all-underflow degenerate case
  double acc = 0;
  for (double lw : log_w) acc += std::exp(lw - mx);
  return mx + std::log(acc) - std::log(static_cast<double>(samples));
}

/// Per-subject features: centers of the approximate posterior, no sampling.
inline MatrixXd encode_subjects(const ModelParams& params, const MatrixXd& standardized) {
  return recognize(standardized, params).center;
}

struct ClassificationReport {
  VectorXd fold_accuracies;
  double mean_accuracy = 0;
  MatrixXd fold_betas;  // folds x K
  int folds = 0;
  bool folds_clamped = false;
};

namespace detail {

struct LogisticFit {
  VectorXd beta;
  double intercept = 0;
  int iterations = 0;
  double grad_norm = 0;
};

/// L2-regularized binary logistic regression by full-batch gradient ascent
/// with a fixed 1/L step (L from the data Gram spectrum). Intercept is
/// unpenalized. Stops at gradient norm < 1e-8 or 1e5 iterations.
inline LogisticFit fit_logistic(const MatrixXd& x, const VectorXd& y, double l2) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Largest eigenvalue of the augmented Gram [X 1]'[X 1]/n by power
  // iteration (deterministic start), with 5% headroom for the truncation.
  VectorXd v = VectorXd::Ones(k + 1).normalized();
  double lam = 1.0;
  for (int it = 0; it < 60; ++it) {
    const VectorXd xv = x * v.head(k) + VectorXd::Constant(n, v[k]);
    VectorXd w(k + 1);
    w.head(k) = x.transpose() * xv * inv_n;
    w[k] = xv.sum() * inv_n;
    lam = w.norm();
    if (lam == 0.0) break;
    v = w / lam;
  }
  const double step = 1.0 / (1.05 * lam / 4.0 + l2 + 1e-12);

  LogisticFit fit;
  fit.beta = VectorXd::Zero(k);
  constexpr int kMaxIters = 100000;
  constexpr double kTol = 1e-8;
  for (int it = 0; it < kMaxIters; ++it) {
    const VectorXd f = x * fit.beta + VectorXd::Constant(n, fit.intercept);
    const VectorXd p = f.unaryExpr([](double a) { return sigmoid(a); });
    const VectorXd resid = y - p;
    const VectorXd g_beta = x.transpose() * resid * inv_n - l2 * fit.beta;
    const double g_int = resid.mean();
    fit.grad_norm = std::sqrt(g_beta.squaredNorm() + g_int * g_int);
    fit.iterations = it;
    if (fit.grad_norm < kTol) break;
    fit.beta += step * g_beta;
    fit.intercept += step * g_int;
  }
  return fit;
}

}  // namespace detail

/// Class-balanced K-fold cross-validated logistic regression on the given
/// features. Folds above the smallest class count are clamped to it.
inline ClassificationReport classify_cv(const MatrixXd& features,
                                        const std::vector<int>& labels, int folds,
                                        double l2, std::uint64_t seed) {
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ShapeError("classify_cv: label count mismatch");
  if (folds < 2) throw ArgumentError("classify_cv: folds must be >= 2");
  std::vector<Eigen::Index> class_idx[2];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ArgumentError("classify_cv: labels must be binary");
    class_idx[labels[i]].push_back(i);
  }
  if (class_idx[0].empty() || class_idx[1].empty())
    throw ArgumentError("classify_cv: both classes must be present");
  const int min_class =
      static_cast<int>(std::min(class_idx[0].size(), class_idx[1].size()));

  ClassificationReport report;
  report.folds = folds;
  if (folds > min_class) {
    report.folds = min_class;
    report.folds_clamped = true;
    if (report.folds < 2)
      throw ArgumentError("classify_cv: smallest class has fewer than 2 subjects");
  }

  // Stratified assignment: shuffle each class, deal round-robin.
  std::vector<int> fold_of(static_cast<std::size_t>(n), 0);
  Rng rng(seed, streams::kFolds);
  for (int cls = 0; cls < 2; ++cls) {
    const auto perm = rng.permutation(class_idx[cls].size());
    for (std::size_t j = 0; j < perm.size(); ++j)
      fold_of[static_cast<std::size_t>(class_idx[cls][perm[j]])] =
          static_cast<int>(j % static_cast<std::size_t>(report.folds));
  }

  report.fold_accuracies.resize(report.folds);
  report.fold_betas.resize(report.folds, features.cols());
  for (int f = 0; f < report.folds; ++f) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (Eigen::Index i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);

    MatrixXd xt(static_cast<Eigen::Index>(train_rows.size()), features.cols());
    VectorXd yt(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t j = 0; j < train_rows.size(); ++j) {
      xt.row(static_cast<Eigen::Index>(j)) = features.row(train_rows[j]);
      yt[static_cast<Eigen::Index>(j)] = labels[train_rows[j]];
    }
    const auto fit = detail::fit_logistic(xt, yt, l2);
    report.fold_betas.row(f) = fit.beta.transpose();

    int correct = 0;
    for (Eigen::Index i : test_rows) {
      const double score = features.row(i).dot(fit.beta) + fit.intercept;
      const int pred = sigmoid(score) >= 0.5 ? 1 : 0;
      correct += pred == labels[i] ? 1 : 0;
    }
    report.fold_accuracies[f] =
        static_cast<double>(correct) / static_cast<double>(test_rows.size());
  }
  report.mean_accuracy = report.fold_accuracies.mean();
  return report;
}

namespace detail {

/// Regularized incomplete beta function I_x(a,b) via the standard
/// continued-fraction expansion (modified Lentz).
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

/// Two-sided p-value of Student's t with df degrees of freedom:
/// I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  return detail::incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct ComponentStats {
  double t = 0;
  double p = 1;
  bool significant = false;  // p < 0.001
  bool degenerate = false;   // zero-SD sample
};

/// One-sample t-test of the fold coefficients for one unit against zero.
inline ComponentStats beta_ttest(const VectorXd& betas) {
  const Eigen::Index n = betas.size();
  if (n < 2) throw ArgumentError("beta_ttest: need at least 2 values");
  const double mean = betas.mean();
  const double var = (betas.array() - mean).square().sum() / static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  ComponentStats out;
  if (sd == 0.0) {
    out.degenerate = true;
    if (mean == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = mean > 0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
  } else {
    out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    out.p = student_t_two_sided_p(out.t, static_cast<double>(n - 1));
  }
  out.significant = out.p < 0.001;
  return out;
}

enum class Axis { kRows, kColumns };

struct CorrelationResult {
  MatrixXd corr;
  std::vector<Eigen::Index> degenerate;  // zero-variance vectors
};

/// Pearson correlations between all row (or column) vectors. Zero-variance
/// vectors give 0 off the diagonal, 1 on it, and are flagged.
inline CorrelationResult correlation_matrix(const MatrixXd& m, Axis axis) {
  const MatrixXd v = axis == Axis::kRows ? m : MatrixXd(m.transpose());
  const Eigen::Index count = v.rows();
  if (v.cols() < 2)
    throw ArgumentError("correlation_matrix: need >= 2 entries along the correlated axis");
  MatrixXd centered = v;
  VectorXd norms(count);
  CorrelationResult out;
  for (Eigen::Index i = 0; i < count; ++i) {
    centered.row(i).array() -= v.row(i).mean();
    norms[i] = centered.row(i).norm();
    if (norms[i] == 0.0) out.degenerate.push_back(i);
  }
  out.corr = MatrixXd::Identity(count, count);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = i + 1; j < count; ++j) {
      double r = 0.0;
      if (norms[i] != 0.0 && norms[j] != 0.0)
        r = centered.row(i).dot(centered.row(j)) / (norms[i] * norms[j]);
      out.corr(i, j) = out.corr(j, i) = r;
    }
  return out;
}

/// Graph used for the component community analysis: absolute correlations
/// with the diagonal and weak edges (< cut) zeroed.
inline MatrixXd component_graph(const MatrixXd& corr, double cut = 0.3) {
  MatrixXd w = corr.cwiseAbs();
  for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, i) = 0.0;
  return (w.array() < cut).select(MatrixXd::Zero(w.rows(), w.cols()), w);
}

struct LouvainResult {
  std::vector<int> labels;
  double modularity = 0;
};

namespace detail {

inline double modularity_of(const MatrixXd& w, const std::vector<int>& labels,
                            double total) {
  if (total == 0.0) return 0.0;
  const int n_comm = 1 + *std::max_element(labels.begin(), labels.end());
  std::vector<double> comm_in(static_cast<std::size_t>(n_comm), 0.0);
  std::vector<double> comm_tot(static_cast<std::size_t>(n_comm), 0.0);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const auto ci = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    comm_tot[ci] += w.row(i).sum();
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
        comm_in[ci] += w(i, j);
  }
  double q = 0;
  for (std::size_t c = 0; c < comm_in.size(); ++c) {
    const double frac = comm_tot[c] / total;
    q += comm_in[c] / total - frac * frac;
  }
  return q;
}

/// One level of greedy local moves. Returns the node->community map
/// (renumbered consecutively) or an empty vector when nothing moved.
inline std::vector<int> louvain_local_moves(const MatrixXd& g, double total, Rng& rng) {
  const Eigen::Index n = g.rows();
  std::vector<int> comm(static_cast<std::size_t>(n));
  std::vector<double> k(static_cast<std::size_t>(n));
  std::vector<double> comm_tot(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    comm[static_cast<std::size_t>(i)] = static_cast<int>(i);
    k[static_cast<std::size_t>(i)] = g.row(i).sum();
    comm_tot[static_cast<std::size_t>(i)] = k[static_cast<std::size_t>(i)];
  }
  const auto order = rng.permutation(static_cast<std::size_t>(n));

  bool any_move = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (const std::size_t iu : order) {
      const auto i = static_cast<Eigen::Index>(iu);
      const int c_old = comm[iu];
      // Link weight from i to each community (self-loop excluded).
      std::vector<std::pair<int, double>> links;  // sparse comm -> weight
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i || g(i, j) == 0.0) continue;
        const int cj = comm[static_cast<std::size_t>(j)];
        bool found = false;
        for (auto& l : links)
          if (l.first == cj) {
            l.second += g(i, j);
            found = true;
            break;
          }
        if (!found) links.emplace_back(cj, g(i, j));
      }
      comm_tot[static_cast<std::size_t>(c_old)] -= k[iu];
      double w_old = 0;
      for (const auto& l : links)
        if (l.first == c_old) w_old = l.second;
      double best_gain = w_old - k[iu] * comm_tot[static_cast<std::size_t>(c_old)] / total;
      int best = c_old;
      std::sort(links.begin(), links.end());
      for (const auto& [c, w] : links) {
        if (c == c_old) continue;
        const double gain = w - k[iu] * comm_tot[static_cast<std::size_t>(c)] / total;
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      comm_tot[static_cast<std::size_t>(best)] += k[iu];
      if (best != c_old) {
        comm[iu] = best;
        moved = true;
        any_move = true;
      }
    }
  }
  if (!any_move) return {};

  // Renumber communities consecutively in order of first appearance.
  std::vector<int> renum(static_cast<std::size_t>(n), -1);
  int next = 0;
  for (auto& c : comm) {
    if (renum[static_cast<std::size_t>(c)] < 0) renum[static_cast<std::size_t>(c)] = next++;
    c = renum[static_cast<std::size_t>(c)];
  }
  return comm;
}

}  // namespace detail

/// Multi-level modularity optimization (greedy local moves, then graph
/// aggregation, repeated to convergence). Deterministic given the seed that
/// fixes the node visiting order.
inline LouvainResult louvain_communities(const MatrixXd& weights, std::uint64_t seed = 0) {
  const Eigen::Index n = weights.rows();
  if (weights.cols() != n) throw ShapeError("louvain_communities: matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0)
      throw ArgumentError("louvain_communities: diagonal must be zero");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (weights(i, j) < 0.0)
        throw ArgumentError("louvain_communities: weights must be non-negative");
      if (std::abs(weights(i, j) - weights(j, i)) > 1e-12)
        throw ArgumentError("louvain_communities: matrix must be symmetric");
    }
  }

  LouvainResult out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = static_cast<int>(i);
  const double total = weights.sum();
  if (total == 0.0) return out;  // singletons, Q = 0

  Rng rng(seed, streams::kLouvain);
  MatrixXd g = weights;
  while (true) {
    const auto comm = detail::louvain_local_moves(g, total, rng);
    if (comm.empty()) break;
    const int n_comm = 1 + *std::max_element(comm.begin(), comm.end());
    for (auto& l : out.labels) l = comm[static_cast<std::size_t>(l)];
    if (n_comm == g.rows()) break;
    MatrixXd agg = MatrixXd::Zero(n_comm, n_comm);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        agg(comm[static_cast<std::size_t>(i)], comm[static_cast<std::size_t>(j)]) += g(i, j);
    g = std::move(agg);
  }
  out.modularity = detail::modularity_of(weights, out.labels, total);
  return out;
}

struct RecoveryResult {
  double score = 0;
  std::vector<std::pair<int, int>> assignment;  // (projection row, truth row)
};

namespace detail {

inline double abs_corr(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const Eigen::RowVectorXd ac = a.array() - a.mean();
  const Eigen::RowVectorXd bc = b.array() - b.mean();
  const double na = ac.norm(), nb = bc.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::abs(ac.dot(bc) / (na * nb));
}

}  // namespace detail

/// Match extracted maps to ground-truth sources one-to-one, maximizing
/// total |correlation| (exact bitmask search over the smaller side when it
/// has <= 10 vectors, greedy otherwise); score is the mean over matches.
inline RecoveryResult recovery_score(const MatrixXd& projections, const MatrixXd& truth) {
  if (projections.rows() < 1 || truth.rows() < 1)
    throw ArgumentError("recovery_score: need at least one map on each side");
  if (projections.cols() != truth.cols())
    throw ShapeError("recovery_score: map length mismatch");

  const bool swap_sides = projections.rows() > truth.rows();
  const MatrixXd& small = swap_sides ? truth : projections;
  const MatrixXd& large = swap_sides ? projections : truth;
  const Eigen::Index ns = small.rows();
  const Eigen::Index nl = large.rows();

  MatrixXd c(nl, ns);
  for (Eigen::Index i = 0; i < nl; ++i)
    for (Eigen::Index j = 0; j < ns; ++j)
      c(i, j) = detail::abs_corr(large.row(i), small.row(j));

  std::vector<std::pair<int, int>> pairs;  // (large row, small row)
  double total = 0;
  if (ns <= 10) {
    // Exact: DP over subsets of the small side, scanning large rows.
    const std::size_t masks = std::size_t{1} << ns;
    const double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(static_cast<std::size_t>(nl) + 1,
                                        std::vector<double>(masks, kNegInf));
    dp[0][0] = 0.0;
    for (Eigen::Index i = 0; i < nl; ++i)
      for (std::size_t mask = 0; mask < masks; ++mask) {
        if (dp[static_cast<std::size_t>(i)][mask] == kNegInf) continue;
        const double cur = dp[static_cast<std::size_t>(i)][mask];
        auto& skip = dp[static_cast<std::size_t>(i) + 1][mask];
        skip = std::max(skip, cur);
        for (Eigen::Index j = 0; j < ns; ++j) {
          if (mask & (std::size_t{1} << j)) continue;
          auto& cell = dp[static_cast<std::size_t>(i) + 1][mask | (std::size_t{1} << j)];
          cell = std::max(cell, cur + c(i, j));
        }
      }
    const std::size_t full = masks - 1;
    total = dp[static_cast<std::size_t>(nl)][full];
    // Recover the assignment by walking the table backwards.
    std::size_t mask = full;
    for (Eigen::Index i = nl; i > 0; --i) {
      const double cur = dp[static_cast<std::size_t>(i)][mask];
      if (dp[static_cast<std::size_t>(i) - 1][mask] == cur) continue;
      for (Eigen::Index j = 0; j < ns; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        if (!(mask & bit)) continue;
        if (dp[static_cast<std::size_t>(i) - 1][mask ^ bit] != kNegInf &&
            std::abs(dp[static_cast<std::size_t>(i) - 1][mask ^ bit] + c(i - 1, j) - cur) <
                1e-12) {
          pairs.emplace_back(static_cast<int>(i - 1), static_cast<int>(j));
          mask ^= bit;
          break;
        }
      }
    }
  } else {
    // Greedy: repeatedly take the best remaining pair.
    std::vector<bool> used_l(static_cast<std::size_t>(nl), false);
    std::vector<bool> used_s(static_cast<std::size_t>(ns), false);
    for (Eigen::Index step = 0; step < ns; ++step) {
      double best = -1;
      Eigen::Index bi = -1, bj = -1;
      for (Eigen::Index i = 0; i < nl; ++i) {
        if (used_l[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < ns; ++j) {
          if (used_s[static_cast<std::size_t>(j)]) continue;
          if (c(i, j) > best) {
            best = c(i, j);
            bi = i;
            bj = j;
          }
        }
      }
      used_l[static_cast<std::size_t>(bi)] = true;
      used_s[static_cast<std::size_t>(bj)] = true;
      total += best;
      pairs.emplace_back(static_cast<int>(bi), static_cast<int>(bj));
    }
  }

  RecoveryResult out;
  out.score = total / static_cast<double>(ns);
  for (auto [li, sj] : pairs)
    out.assignment.emplace_back(swap_sides ? sj : li, swap_sides ? li : sj);
  std::sort(out.assignment.begin(), out.assignment.end());
  return out;
}

}  // namespace hmvae

#endif  // HMVAE_ANALYSIS_HPP_

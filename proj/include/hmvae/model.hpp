#ifndef HMVAE_MODEL_HPP_
#define HMVAE_MODEL_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hmvae/distributions.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/rng.hpp"

namespace hmvae {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct AffineLayer {
  MatrixXd weights;  // out x in
  VectorXd bias;     // out

  AffineLayer() = default;
  AffineLayer(Eigen::Index out, Eigen::Index in)
      : weights(MatrixXd::Zero(out, in)), bias(VectorXd::Zero(out)) {}

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }

  /// Batched affine map: rows of X are inputs.
  MatrixXd forward(const MatrixXd& x) const {
    return (x * weights.transpose()).rowwise() + bias.transpose();
  }
};

struct ModelDims {
  Eigen::Index data_dim = 0;
  Eigen::Index latent_dim = 64;
  Eigen::Index hidden_recognition = 500;
  Eigen::Index hidden_generation = 500;
};

/// All learnable parameters: recognition net (tanh hidden, outputs posterior
/// center and log scale), generation net (softplus hidden, outputs Gaussian
/// mean and log sigma), and the logistic prior over the latent units.
struct ModelParams {
  AffineLayer rec1, rec2;  // x -> hidden (tanh), hidden -> 2K
  AffineLayer gen1, gen2;  // h -> hidden (softplus), hidden -> 2D
  LogisticDiag prior;      // K units

  Eigen::Index data_dim() const { return rec1.in_dim(); }
  Eigen::Index latent_dim() const { return prior.size(); }
  ModelDims dims() const {
    return {rec1.in_dim(), prior.size(), rec1.out_dim(), gen1.out_dim()};
  }

  struct BlockRef {
    const char* name;
    double* data;
    Eigen::Index size;
  };

  struct ConstBlockRef {
    const char* name;
    const double* data;
    Eigen::Index size;
  };

  /// Mutable views over every parameter block, in declared order. Used for
  /// elementwise updates and finite-difference sweeps; element order within
  /// a block is storage order.
  std::array<BlockRef, 10> blocks() {
    return {{{"rec1.weights", rec1.weights.data(), rec1.weights.size()},
             {"rec1.bias", rec1.bias.data(), rec1.bias.size()},
             {"rec2.weights", rec2.weights.data(), rec2.weights.size()},
             {"rec2.bias", rec2.bias.data(), rec2.bias.size()},
             {"gen1.weights", gen1.weights.data(), gen1.weights.size()},
             {"gen1.bias", gen1.bias.data(), gen1.bias.size()},
             {"gen2.weights", gen2.weights.data(), gen2.weights.size()},
             {"gen2.bias", gen2.bias.data(), gen2.bias.size()},
             {"prior.center", prior.center.data(), prior.center.size()},
             {"prior.log_scale", prior.log_scale.data(), prior.log_scale.size()}}};
  }

  std::array<ConstBlockRef, 10> blocks() const {
    return {{{"rec1.weights", rec1.weights.data(), rec1.weights.size()},
             {"rec1.bias", rec1.bias.data(), rec1.bias.size()},
             {"rec2.weights", rec2.weights.data(), rec2.weights.size()},
             {"rec2.bias", rec2.bias.data(), rec2.bias.size()},
             {"gen1.weights", gen1.weights.data(), gen1.weights.size()},
             {"gen1.bias", gen1.bias.data(), gen1.bias.size()},
             {"gen2.weights", gen2.weights.data(), gen2.weights.size()},
             {"gen2.bias", gen2.bias.data(), gen2.bias.size()},
             {"prior.center", prior.center.data(), prior.center.size()},
             {"prior.log_scale", prior.log_scale.data(), prior.log_scale.size()}}};
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks()) n += b.size;
    return n;
  }
};

/// Gradients carry the exact shapes of the parameters they belong to.
using ModelGrads = ModelParams;

inline ModelParams zeros_like_params(const ModelDims& d) {
  ModelParams p;
  p.rec1 = AffineLayer(d.hidden_recognition, d.data_dim);
  p.rec2 = AffineLayer(2 * d.latent_dim, d.hidden_recognition);
  p.gen1 = AffineLayer(d.hidden_generation, d.latent_dim);
  p.gen2 = AffineLayer(2 * d.data_dim, d.hidden_generation);
  p.prior = LogisticDiag::standard(d.latent_dim);
  return p;
}

/// Seeded initialization: weights uniform in +/-sqrt(6/(fan_in+fan_out)),
/// biases zero, prior at the standard logistic. Weights fill row by row.
inline ModelParams init_params(const ModelDims& d, Rng& rng) {
  ModelParams p = zeros_like_params(d);
  for (MatrixXd* w : {&p.rec1.weights, &p.rec2.weights, &p.gen1.weights, &p.gen2.weights}) {
    const double a = std::sqrt(6.0 / static_cast<double>(w->rows() + w->cols()));
    for (Eigen::Index r = 0; r < w->rows(); ++r)
      for (Eigen::Index c = 0; c < w->cols(); ++c) (*w)(r, c) = rng.uniform(-a, a);
  }
  return p;
}

inline ModelParams init_params(const ModelDims& d, std::uint64_t seed) {
  Rng rng(seed, streams::kInit);
  return init_params(d, rng);
}

/// Posterior parameters for a batch: row n holds (center, log_scale) of
/// q(h | x_n).
struct RecognitionOut {
  MatrixXd center;     // N x K
  MatrixXd log_scale;  // N x K

  LogisticDiag row(Eigen::Index n) const {
    return LogisticDiag(center.row(n).transpose().array(),
                        log_scale.row(n).transpose().array());
  }
};

/// Conditional-likelihood parameters for a batch of latent vectors.
struct GenerationOut {
  MatrixXd mean;       // N x D
  MatrixXd log_sigma;  // N x D

  GaussianDiag row(Eigen::Index n) const {
    return GaussianDiag(mean.row(n).transpose().array(),
                        log_sigma.row(n).transpose().array());
  }
};

inline RecognitionOut recognize(const MatrixXd& x, const ModelParams& params) {
  if (x.cols() != params.data_dim())
    throw ShapeError("recognize: input width " + std::to_string(x.cols()) +
                     " != data dim " + std::to_string(params.data_dim()));
  const MatrixXd hidden = params.rec1.forward(x).array().tanh().matrix();
  const MatrixXd out = params.rec2.forward(hidden);
  const Eigen::Index k = params.latent_dim();
  return {out.leftCols(k), out.rightCols(k)};
}

inline LogisticDiag recognize(const VectorXd& x, const ModelParams& params) {
  return recognize(MatrixXd(x.transpose()), params).row(0);
}

inline GenerationOut generate(const MatrixXd& h, const ModelParams& params) {
  if (h.cols() != params.latent_dim())
    throw ShapeError("generate: input width " + std::to_string(h.cols()) +
                     " != latent dim " + std::to_string(params.latent_dim()));
  const MatrixXd hidden =
      params.gen1.forward(h).unaryExpr([](double a) { return softplus(a); });
  const MatrixXd out = params.gen2.forward(hidden);
  const Eigen::Index d = params.data_dim();
  return {out.leftCols(d), out.rightCols(d)};
}

inline GaussianDiag generate(const VectorXd& h, const ModelParams& params) {
  return generate(MatrixXd(h.transpose()), params).row(0);
}

/// Variational lower bound split into its three summands, each a mean over
/// batch rows and Monte Carlo samples. elbo == recon + log_prior + neg_log_q
/// by construction.
struct ElboBreakdown {
  double elbo = 0;
  double recon = 0;       // mean log p(x|h)
  double log_prior = 0;   // mean log p(h)
  double neg_log_q = 0;   // mean -log q(h|x)
};

namespace detail {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Shared forward/backward pass. The reparameterized draws use one
/// K-vector of uniforms per Monte Carlo sample, shared across batch rows,
/// so a batch of repeated rows reproduces the single-row gradient exactly.
inline ElboBreakdown elbo_pass(const MatrixXd& x, const ModelParams& params,
                               int mc_samples, Rng& rng, ModelGrads* grads) {
  if (mc_samples < 1)
    throw ArgumentError("elbo: mc_samples must be >= 1, got " + std::to_string(mc_samples));
  if (x.rows() == 0) throw ArgumentError("elbo: empty batch");
  if (x.cols() != params.data_dim())
    throw ShapeError("elbo: batch width " + std::to_string(x.cols()) +
                     " != data dim " + std::to_string(params.data_dim()));

  const Eigen::Index n = x.rows();
  const Eigen::Index kk = params.latent_dim();
  const double inv_nm = 1.0 / (static_cast<double>(n) * mc_samples);

  // Recognition forward (sample independent).
  const MatrixXd a1 = params.rec1.forward(x);
  const MatrixXd hr = a1.array().tanh().matrix();
  const MatrixXd a2 = params.rec2.forward(hr);
  const MatrixXd mu = a2.leftCols(kk);
  const MatrixXd ls = a2.rightCols(kk);
  const MatrixXd s = ls.array().exp().matrix();

  const ArrayXd prior_scale = params.prior.scale();

  double recon_sum = 0, prior_sum = 0, nlq_sum = 0;
  MatrixXd d_a2_sum;
  if (grads) d_a2_sum = MatrixXd::Zero(n, 2 * kk);

  for (int m = 0; m < mc_samples; ++m) {
    // One uniform draw per latent unit, shared across the batch.
    VectorXd u(kk);
    for (Eigen::Index j = 0; j < kk; ++j) u[j] = logit(rng.uniform01());

    const MatrixXd h = mu + (s.array().rowwise() * u.transpose().array()).matrix();

    // Generation forward.
    const MatrixXd b1 = params.gen1.forward(h);
    const MatrixXd hg = b1.unaryExpr([](double a) { return softplus(a); });
    const MatrixXd b2 = params.gen2.forward(hg);
    const Eigen::Index dd = params.data_dim();
    const auto mx = b2.leftCols(dd).array();
    const auto lsx = b2.rightCols(dd).array();

    const Eigen::ArrayXXd zx = (x.array() - mx) * (-lsx).exp();
    recon_sum += (-lsx - kHalfLog2Pi - 0.5 * zx.square()).sum();

    const Eigen::ArrayXXd zp = (h.array().rowwise() - params.prior.center.transpose())
                                   .rowwise() /
                               prior_scale.transpose();
    prior_sum += (-zp - 2.0 * (-zp).unaryExpr([](double a) { return softplus(a); }))
                     .sum() -
                 static_cast<double>(n) * params.prior.log_scale.sum();

    // -log q at the sample reduces to u + log s + 2*softplus(-u).
    double nlq_m = ls.sum();
    for (Eigen::Index j = 0; j < kk; ++j)
      nlq_m += static_cast<double>(n) * (u[j] + 2.0 * softplus(-u[j]));
    nlq_sum += nlq_m;

    if (grads) {
      // Generation output deltas.
      const Eigen::ArrayXXd d_mx = zx * (-lsx).exp();
      const Eigen::ArrayXXd d_lsx = zx.square() - 1.0;
      MatrixXd d_b2(n, 2 * dd);
      d_b2 << d_mx.matrix(), d_lsx.matrix();

      grads->gen2.weights.noalias() += d_b2.transpose() * hg;
      grads->gen2.bias += d_b2.colwise().sum().transpose();
      const MatrixXd d_hg = d_b2 * params.gen2.weights;
      const MatrixXd d_b1 =
          (b1.unaryExpr([](double a) { return sigmoid(a); }).array() * d_hg.array())
              .matrix();
      grads->gen1.weights.noalias() += d_b1.transpose() * h;
      grads->gen1.bias += d_b1.colwise().sum().transpose();

      // Paths into the latent sample: likelihood plus prior.
      const Eigen::ArrayXXd d_prior_dz = -(zp / 2.0).tanh();
      MatrixXd d_h = d_b1 * params.gen1.weights;
      d_h.array() += d_prior_dz.rowwise() / prior_scale.transpose();

      grads->prior.center -= (d_prior_dz.rowwise() / prior_scale.transpose())
                                 .colwise()
                                 .sum()
                                 .transpose();
      grads->prior.log_scale +=
          (d_prior_dz * (-zp)).colwise().sum().transpose() - static_cast<double>(n);

      // Recognition output deltas: center takes the sample path only; the
      // location terms of -log q cancel against it. log_scale adds the
      // entropy-like +1 per unit.
      d_a2_sum.leftCols(kk) += d_h;
      d_a2_sum.rightCols(kk).array() +=
          d_h.array() * (s.array().rowwise() * u.transpose().array()) + 1.0;
    }
  }

  if (grads) {
    grads->rec2.weights.noalias() += d_a2_sum.transpose() * hr;
    grads->rec2.bias += d_a2_sum.colwise().sum().transpose();
    const MatrixXd d_hr = d_a2_sum * params.rec2.weights;
    const MatrixXd d_a1 = ((1.0 - hr.array().square()) * d_hr.array()).matrix();
    grads->rec1.weights.noalias() += d_a1.transpose() * x;
    grads->rec1.bias += d_a1.colwise().sum().transpose();

    for (auto& blk : grads->blocks())
      for (Eigen::Index i = 0; i < blk.size; ++i) blk.data[i] *= inv_nm;
  }

  ElboBreakdown out;
  out.recon = recon_sum * inv_nm;
  out.log_prior = prior_sum * inv_nm;
  out.neg_log_q = nlq_sum * inv_nm;
  out.elbo = out.recon + out.log_prior + out.neg_log_q;
  if (!std::isfinite(out.recon)) throw NumericError("elbo: recon term non-finite");
  if (!std::isfinite(out.log_prior)) throw NumericError("elbo: log_prior term non-finite");
  if (!std::isfinite(out.neg_log_q)) throw NumericError("elbo: neg_log_q term non-finite");
  return out;
}

}  // namespace detail

/// Monte Carlo ELBO estimate over a batch; deterministic given the seed.
inline ElboBreakdown elbo_estimate(const MatrixXd& batch, const ModelParams& params,
                                   int mc_samples, Rng& rng) {
  return detail::elbo_pass(batch, params, mc_samples, rng, nullptr);
}

inline ElboBreakdown elbo_estimate(const MatrixXd& batch, const ModelParams& params,
                                   int mc_samples, std::uint64_t seed) {
  Rng rng(seed, streams::kSampler);
  return elbo_estimate(batch, params, mc_samples, rng);
}

/// Analytic gradients of the Monte Carlo objective for the fixed eps draws,
/// by reverse accumulation through the reparameterized samples. Same seed,
/// same bits.
inline std::pair<ModelGrads, ElboBreakdown> elbo_gradients(const MatrixXd& batch,
                                                           const ModelParams& params,
                                                           int mc_samples, Rng& rng) {
  ModelGrads grads = zeros_like_params(params.dims());
  ElboBreakdown b = detail::elbo_pass(batch, params, mc_samples, rng, &grads);
  return {std::move(grads), b};
}

inline std::pair<ModelGrads, ElboBreakdown> elbo_gradients(const MatrixXd& batch,
                                                           const ModelParams& params,
                                                           int mc_samples,
                                                           std::uint64_t seed) {
  Rng rng(seed, streams::kSampler);
  return elbo_gradients(batch, params, mc_samples, rng);
}

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0;
  Eigen::Index worst_index = 0;
  double analytic = 0;  // at the worst entry
  double numeric = 0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double tolerance = 0;
  double worst = 0;

  bool pass() const { return worst < tolerance; }
};

namespace detail {
constexpr int kGradCheckSamples = 2;
constexpr std::uint64_t kGradCheckSeed = 0x5eed;
}  // namespace detail

/// Central-difference comparison of `analytic` against the Monte Carlo
/// objective with the given sampling configuration. Relative error per
/// entry is |a-n| / max(|a|,|n|,1e-8); the report keeps the worst entry of
/// each parameter block.
inline GradCheckReport grad_check_against(const ModelParams& params,
                                          const MatrixXd& batch,
                                          const ModelGrads& analytic, int mc_samples,
                                          std::uint64_t seed, double step,
                                          double tolerance) {
  ModelParams work = params;
  ModelGrads grads = analytic;  // aligned block iteration
  GradCheckReport report;
  report.tolerance = tolerance;
  auto work_blocks = work.blocks();
  auto grad_blocks = grads.blocks();
  for (std::size_t bi = 0; bi < work_blocks.size(); ++bi) {
    auto& wb = work_blocks[bi];
    GradCheckBlock blk;
    blk.name = wb.name;
    for (Eigen::Index i = 0; i < wb.size; ++i) {
      const double saved = wb.data[i];
      wb.data[i] = saved + step;
      const double up = elbo_estimate(batch, work, mc_samples, seed).elbo;
      wb.data[i] = saved - step;
      const double down = elbo_estimate(batch, work, mc_samples, seed).elbo;
      wb.data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grad_blocks[bi].data[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel >= blk.max_rel_err) {
        blk.max_rel_err = rel;
        blk.worst_index = i;
        blk.analytic = a;
        blk.numeric = numeric;
      }
    }
    report.worst = std::max(report.worst, blk.max_rel_err);
    report.blocks.push_back(std::move(blk));
  }
  return report;
}

/// Convenience check of the library's own gradients (M=2, fixed seed).
inline GradCheckReport grad_check(const ModelParams& params, const MatrixXd& batch,
                                  double step, double tolerance) {
  auto [grads, breakdown] = elbo_gradients(batch, params, detail::kGradCheckSamples,
                                           detail::kGradCheckSeed);
  (void)breakdown;
  return grad_check_against(params, batch, grads, detail::kGradCheckSamples,
                            detail::kGradCheckSeed, step, tolerance);
}

}  // namespace hmvae

#endif  // HMVAE_MODEL_HPP_

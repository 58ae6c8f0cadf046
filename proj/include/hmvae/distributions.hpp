#ifndef HMVAE_DISTRIBUTIONS_HPP_
#define HMVAE_DISTRIBUTIONS_HPP_

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "hmvae/errors.hpp"
#include "hmvae/rng.hpp"

namespace hmvae {

using Eigen::ArrayXd;

/// log(1 + e^a) without overflow: max(a,0) + log1p(e^{-|a|}).
inline double softplus(double a) {
  return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a)));
}

inline double sigmoid(double a) {
  return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a))
                  : std::exp(a) / (1.0 + std::exp(a));
}

/// log(e/(1-e)) evaluated stably for e in (0,1).
inline double logit(double e) { return std::log(e) - std::log1p(-e); }

/// Factorized logistic distribution: per-unit center and log scale.
/// Scales live in log space so positivity is structural.
struct LogisticDiag {
  ArrayXd center;
  ArrayXd log_scale;

  LogisticDiag() = default;
  LogisticDiag(ArrayXd c, ArrayXd ls) : center(std::move(c)), log_scale(std::move(ls)) {
    if (center.size() != log_scale.size())
      throw ShapeError("LogisticDiag: center size " + std::to_string(center.size()) +
                       " != log_scale size " + std::to_string(log_scale.size()));
  }
  static LogisticDiag standard(Eigen::Index dim) {
    return LogisticDiag(ArrayXd::Zero(dim), ArrayXd::Zero(dim));
  }
  Eigen::Index size() const { return center.size(); }
  ArrayXd scale() const { return log_scale.exp(); }
};

/// Factorized Gaussian: per-dimension mean and log standard deviation.
struct GaussianDiag {
  ArrayXd mean;
  ArrayXd log_sigma;

  GaussianDiag() = default;
  GaussianDiag(ArrayXd m, ArrayXd ls) : mean(std::move(m)), log_sigma(std::move(ls)) {
    if (mean.size() != log_sigma.size())
      throw ShapeError("GaussianDiag: mean size " + std::to_string(mean.size()) +
                       " != log_sigma size " + std::to_string(log_sigma.size()));
  }
  Eigen::Index size() const { return mean.size(); }
  ArrayXd sigma() const { return log_sigma.exp(); }
};

/// Per-dimension log density of the factorized logistic:
///   -z - log s - 2*log(1 + e^{-z}),  z = (h - center)/scale.
inline ArrayXd logistic_log_pdf(const ArrayXd& h, const LogisticDiag& p) {
  if (h.size() != p.size())
    throw ShapeError("logistic_log_pdf: h size " + std::to_string(h.size()) +
                     " != parameter size " + std::to_string(p.size()));
  ArrayXd out(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double s = std::exp(p.log_scale[i]);
    const double z = (h[i] - p.center[i]) / s;
    out[i] = -z - p.log_scale[i] - 2.0 * softplus(-z);
  }
  return out;
}

/// Standard logistic (center 0, scale 1) per-dimension log density.
inline ArrayXd standard_logistic_log_pdf(const ArrayXd& h) {
  ArrayXd out(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) out[i] = -h[i] - 2.0 * softplus(-h[i]);
  return out;
}

/// Reparameterized draw: h = center + logit(eps) * scale. Differentiable in
/// center and log_scale for fixed eps.
inline ArrayXd logistic_sample(const LogisticDiag& p, const ArrayXd& eps) {
  if (eps.size() != p.size())
    throw ShapeError("logistic_sample: eps size " + std::to_string(eps.size()) +
                     " != parameter size " + std::to_string(p.size()));
  ArrayXd out(eps.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0 && eps[i] < 1.0))
      throw DomainError("logistic_sample: eps[" + std::to_string(i) +
                        "] = " + std::to_string(eps[i]) + " not strictly inside (0,1)");
    out[i] = p.center[i] + logit(eps[i]) * std::exp(p.log_scale[i]);
  }
  return out;
}

inline ArrayXd logistic_sample(const LogisticDiag& p, Rng& rng) {
  ArrayXd eps(p.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.uniform01();
  return logistic_sample(p, eps);
}

/// Analytic entropy: sum_i (log s_i + 2).
inline double logistic_entropy(const LogisticDiag& p) {
  return p.log_scale.sum() + 2.0 * static_cast<double>(p.size());
}

/// Sum over dimensions of the diagonal-Gaussian log density.
inline double gaussian_log_pdf(const ArrayXd& x, const GaussianDiag& p) {
  if (x.size() != p.size())
    throw ShapeError("gaussian_log_pdf: x size " + std::to_string(x.size()) +
                     " != parameter size " + std::to_string(p.size()));
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double sigma = std::exp(p.log_sigma[i]);
    const double d = (x[i] - p.mean[i]) / sigma;
    acc += -p.log_sigma[i] - kHalfLog2Pi - 0.5 * d * d;
  }
  return acc;
}

}  // namespace hmvae

#endif  // HMVAE_DISTRIBUTIONS_HPP_

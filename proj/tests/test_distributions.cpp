#include <algorithm>
#include <cmath>
#include <vector>

#include <catch_amalgamated.hpp>

#include "hmvae/distributions.hpp"
#include "hmvae/rng.hpp"

using namespace hmvae;

namespace {

LogisticDiag make_logistic(std::initializer_list<double> centers,
                           std::initializer_list<double> log_scales) {
  ArrayXd c(static_cast<Eigen::Index>(centers.size()));
  ArrayXd s(static_cast<Eigen::Index>(log_scales.size()));
  std::copy(centers.begin(), centers.end(), c.data());
  std::copy(log_scales.begin(), log_scales.end(), s.data());
  return {c, s};
}

ArrayXd scalar(double v) { return ArrayXd::Constant(1, v); }

}  // namespace

TEST_CASE("logistic log pdf matches closed-form values") {
  // Density peak of the standard logistic is 1/4.
  CHECK_THAT(logistic_log_pdf(scalar(0.0), LogisticDiag::standard(1))[0],
             Catch::Matchers::WithinAbs(std::log(0.25), 1e-12));
  // Peak at the center is -log(4s) for any scale.
  CHECK_THAT(logistic_log_pdf(scalar(3.0), make_logistic({3.0}, {std::log(2.0)}))[0],
             Catch::Matchers::WithinAbs(-std::log(8.0), 1e-12));
  // High-precision evaluation away from the peak.
  CHECK_THAT(logistic_log_pdf(scalar(5.0), LogisticDiag::standard(1))[0],
             Catch::Matchers::WithinAbs(-5.01343069698, 1e-9));
}

TEST_CASE("standard logistic agrees with the general form") {
  CHECK_THAT(standard_logistic_log_pdf(scalar(0.0))[0],
             Catch::Matchers::WithinAbs(-std::log(4.0), 1e-14));
  CHECK_THAT(standard_logistic_log_pdf(scalar(-3.0))[0],
             Catch::Matchers::WithinAbs(-3.09717470315, 1e-9));

  const LogisticDiag std1 = LogisticDiag::standard(21);
  ArrayXd grid(21);
  for (int i = 0; i <= 20; ++i) grid[i] = -10.0 + i;
  const ArrayXd general = logistic_log_pdf(grid, std1);
  const ArrayXd special = standard_logistic_log_pdf(grid);
  CHECK((general - special).abs().maxCoeff() < 1e-12);
}

TEST_CASE("logistic log pdf is exactly symmetric about the center") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const double mu = rng.uniform(-3, 3);
    const double ls = rng.uniform(-2, 2);
    const LogisticDiag p = make_logistic({mu}, {ls});
    for (double delta : {0.1, 1.0, 5.5, 30.0}) {
      const double up = logistic_log_pdf(scalar(mu + delta), p)[0];
      const double down = logistic_log_pdf(scalar(mu - delta), p)[0];
      CHECK(up == down);  // bitwise, not approximate
    }
  }
}

TEST_CASE("logistic density integrates to one") {
  for (auto [mu, ls] : std::vector<std::pair<double, double>>{{0, 0}, {2.5, -1}, {-4, 1.3}}) {
    const LogisticDiag p = make_logistic({mu}, {ls});
    const double s = std::exp(ls);
    const int n = 100000;
    const double lo = mu - 60 * s, hi = mu + 60 * s;
    const double dx = (hi - lo) / (n - 1);
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + i * dx;
      const double f = std::exp(logistic_log_pdf(scalar(x), p)[0]);
      acc += (i == 0 || i == n - 1) ? 0.5 * f : f;
    }
    CHECK_THAT(acc * dx, Catch::Matchers::WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("logistic sampler values and errors") {
  const LogisticDiag p = make_logistic({1.5, -2.0}, {0.0, std::log(3.0)});
  ArrayXd eps_half = ArrayXd::Constant(2, 0.5);
  CHECK((logistic_sample(p, eps_half) - p.center).abs().maxCoeff() < 1e-14);

  // logit antisymmetry: h(eps) + h(1-eps) = 2*center
  ArrayXd eps(2);
  eps << 0.3, 0.9;
  ArrayXd eps_m(2);
  eps_m << 0.7, 0.1;
  const ArrayXd sum = logistic_sample(p, eps) + logistic_sample(p, eps_m);
  CHECK((sum - 2.0 * p.center).abs().maxCoeff() < 1e-12);

  CHECK_THAT(logistic_sample(LogisticDiag::standard(1), scalar(0.9))[0],
             Catch::Matchers::WithinAbs(2.19722457734, 1e-10));

  ArrayXd bad(2);
  bad << 0.0, 0.5;
  CHECK_THROWS_AS(logistic_sample(p, bad), DomainError);
  bad << 0.5, 1.0;
  CHECK_THROWS_AS(logistic_sample(p, bad), DomainError);
  CHECK_THROWS_AS(logistic_sample(p, scalar(0.5)), ShapeError);
}

TEST_CASE("logistic entropy analytic and Monte Carlo") {
  CHECK_THAT(logistic_entropy(LogisticDiag::standard(1)), Catch::Matchers::WithinAbs(2.0, 1e-14));
  CHECK_THAT(logistic_entropy(make_logistic({0.0}, {1.0})), Catch::Matchers::WithinAbs(3.0, 1e-14));

  const LogisticDiag p = LogisticDiag::standard(1);
  Rng rng(42);
  double acc = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += -logistic_log_pdf(logistic_sample(p, rng), p)[0];
  CHECK_THAT(acc / n, Catch::Matchers::WithinAbs(2.0, 0.01));
}

TEST_CASE("sampler moments and distribution shape") {
  const double mu = 0.7, s = 1.8;
  const LogisticDiag p = make_logistic({mu}, {std::log(s)});
  Rng rng(2024);
  const int n = 100000;
  std::vector<double> draws(n);
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    draws[i] = logistic_sample(p, rng)[0];
    sum += draws[i];
  }
  const double mean = sum / n;
  double var = 0;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= n;

  const double pi = 3.14159265358979323846;
  CHECK(std::abs(mean - mu) < 3.0 * s * pi / std::sqrt(3.0 * n));
  const double true_var = s * s * pi * pi / 3.0;
  CHECK(std::abs(var - true_var) < 0.05 * true_var);

  // Kolmogorov-Smirnov against the logistic CDF at the 1% level.
  std::sort(draws.begin(), draws.end());
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    const double cdf = 1.0 / (1.0 + std::exp(-(draws[i] - mu) / s));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
    ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("gaussian log pdf closed form") {
  GaussianDiag unit{scalar(0.0), scalar(0.0)};
  CHECK_THAT(gaussian_log_pdf(scalar(0.0), unit),
             Catch::Matchers::WithinAbs(-0.91893853320467274, 1e-12));
  CHECK_THAT(gaussian_log_pdf(scalar(1.0), unit),
             Catch::Matchers::WithinAbs(-1.41893853320467274, 1e-12));
  GaussianDiag wide{scalar(0.0), scalar(std::log(2.0))};
  CHECK_THAT(gaussian_log_pdf(scalar(2.0), wide),
             Catch::Matchers::WithinAbs(-2.11208571376, 1e-9));
  CHECK_THROWS_AS(gaussian_log_pdf(ArrayXd::Zero(3), wide), ShapeError);
}

TEST_CASE("distribution bundles validate their shapes") {
  CHECK_THROWS_AS(LogisticDiag(ArrayXd::Zero(2), ArrayXd::Zero(3)), ShapeError);
  CHECK_THROWS_AS(GaussianDiag(ArrayXd::Zero(4), ArrayXd::Zero(1)), ShapeError);
  CHECK_THROWS_AS(logistic_log_pdf(ArrayXd::Zero(2), LogisticDiag::standard(3)), ShapeError);
}

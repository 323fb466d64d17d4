#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lgqr/curvature.hpp"
#include "lgqr/dist.hpp"
#include "lgqr/errors.hpp"
#include "lgqr/rng.hpp"

using namespace lgqr;

TEST_CASE("symmetric drops at fixed points") {
  Eigen::VectorXd y(1), mu(1);
  y << 0.0;
  mu << 0.0;
  auto [du, dl] = dll(y, mu, 1.0, ALScale(1.0), QuantileLevel(0.5));
  CHECK(du == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dl == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(dll(y, mu, 0.0, ALScale(1.0), QuantileLevel(0.5)),
                  std::invalid_argument);
}

TEST_CASE("drops equal a direct two-evaluation recomputation") {
  Rng rng(21);
  ALScale s(0.4);
  QuantileLevel q(0.7);
  Eigen::VectorXd y(40), mu(40);
  for (int i = 0; i < 40; ++i) {
    y[i] = rng.normal();
    mu[i] = 0.3 * rng.normal();
  }
  double delta = 0.37;
  auto [du, dl] = dll(y, mu, delta, s, q);
  Eigen::VectorXd up = mu.array() + delta;
  Eigen::VectorXd down = mu.array() - delta;
  CHECK(du == total_loglik(y, mu, s, q) - total_loglik(y, up, s, q));
  CHECK(dl == total_loglik(y, mu, s, q) - total_loglik(y, down, s, q));
}

TEST_CASE("fisher curvature equals the ald fisher information") {
  Rng rng(22);
  for (int k = 0; k < 20; ++k) {
    double tau = 0.05 + 0.9 * rng.uniform();
    double lam = 0.05 + 2.0 * rng.uniform();
    CHECK(fisher_curvature(ALScale(lam), QuantileLevel(tau)) ==
          ald_fisher_mu(ALScale(lam), QuantileLevel(tau)));
  }
}

TEST_CASE("second-difference curvature at hand-checked instances") {
  Eigen::VectorXd y(1), mu(1);
  y << 0.0;
  mu << 0.0;
  CurvatureEstimate e = tkc_estimate(y, mu, 1.0, ALScale(1.0), QuantileLevel(0.5));
  CHECK(e.c == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(e.delta == 1.0);

  // Residuals {0.5, -2} at h = 1: only the first is inside the kernel.
  Eigen::VectorXd y2(2), mu2(2);
  y2 << 0.5, -2.0;
  mu2 << 0.0, 0.0;
  CurvatureEstimate e2 = tkc_estimate(y2, mu2, 1.0, ALScale(1.0), QuantileLevel(0.5));
  CHECK(e2.c == doctest::Approx(0.25).epsilon(1e-13));
  Eigen::VectorXd resid = y2 - mu2;
  CHECK(tkc_kernel_form(resid, 1.0, ALScale(1.0)) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("residual at the kernel peak and empty support") {
  Eigen::VectorXd r(1);
  r << 0.0;
  CHECK(tkc_kernel_form(r, 1.0, ALScale(1.0)) == 1.0);
  Eigen::VectorXd y(3), mu(3);
  y << 2.0, -3.0, 1.5;
  mu << 0.0, 0.0, 0.0;
  CHECK_THROWS_AS(tkc_estimate(y, mu, 1.0, ALScale(1.0), QuantileLevel(0.5)),
                  DegenerateCurvature);
}

TEST_CASE("second-difference and kernel forms are the same number") {
  Rng rng(23);
  for (int k = 0; k < 200; ++k) {
    int n = 1 + rng.uniform_int(120);
    double tau = 0.05 + 0.9 * rng.uniform();
    double lam = 0.05 + 3.0 * rng.uniform();
    double h = 0.05 + 2.0 * rng.uniform();
    Eigen::VectorXd y(n), mu(n);
    bool inside = false;
    for (int i = 0; i < n; ++i) {
      mu[i] = rng.normal();
      y[i] = mu[i] + 1.5 * rng.normal();
      inside = inside || std::abs(y[i] - mu[i]) < h;
    }
    if (!inside) {
      y[0] = mu[0] + 0.3 * h;
    }
    double kernel = tkc_kernel_form(y - mu, h, ALScale(lam));
    CurvatureEstimate e = tkc_estimate(y, mu, h, ALScale(lam), QuantileLevel(tau));
    // The drop-based route differences full log-likelihood sums, so its
    // round-off floor grows with sum magnitude; this wide-scale sweep gets a
    // looser bound than the unit-scale identity check.
    CHECK(std::abs(kernel - e.c) <= 1e-8 * std::max(kernel, e.c));
  }
}

TEST_CASE("the two curvature routes agree tightly on unit scales") {
  Rng rng(28);
  for (int k = 0; k < 200; ++k) {
    int n = 1 + rng.uniform_int(300);
    double tau = 0.05 + 0.9 * rng.uniform();
    double lam = 0.5 + 1.5 * rng.uniform();
    double h = 0.5 + 1.5 * rng.uniform();
    Eigen::VectorXd y(n), mu(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = rng.normal();
      y[i] = mu[i] + 1.2 * h * 2.0 * (rng.uniform() - 0.5);
    }
    double kernel = tkc_kernel_form(y - mu, h, ALScale(lam));
    CurvatureEstimate e = tkc_estimate(y, mu, h, ALScale(lam), QuantileLevel(tau));
    CHECK(std::abs(kernel - e.c) <= 1e-12 * std::max(kernel, e.c));
  }
}

TEST_CASE("curvature is consistent for the normal density at its median") {
  Rng rng(24);
  const int n = 100000;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  CurvatureEstimate e = tkc_estimate(y, mu, 0.05, ALScale(1.0), QuantileLevel(0.5));
  CHECK(e.c == doctest::Approx(0.3989422804014327).epsilon(0.03));
}

TEST_CASE("bandwidth selection respects the candidate grid") {
  Rng rng(25);
  const int n = 300;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  ALScale s(1.0);
  QuantileLevel q(0.5);

  // A single candidate that clears the threshold is returned unchanged.
  TkcConfig one;
  one.grid_lo = 0;
  one.grid_hi = 0;
  one.min_drop = 0.1;
  std::vector<double> a(n);
  for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] = std::abs(y[i]);
  std::nth_element(a.begin(), a.begin() + n / 2, a.end());
  double med = a[n / 2];
  if (n % 2 == 0) {
    double lower = *std::max_element(a.begin(), a.begin() + n / 2);
    med = 0.5 * (med + lower);
  }
  BandwidthChoice ch = select_bandwidth(y, mu, s, q, one);
  CHECK_FALSE(ch.below_threshold);
  CHECK(ch.delta == doctest::Approx(med).epsilon(1e-12));

  // An unreachable threshold reports the largest candidate as a fallback.
  TkcConfig hard;
  hard.min_drop = 1e9;
  BandwidthChoice fb = select_bandwidth(y, mu, s, q, hard);
  CHECK(fb.below_threshold);
  CHECK(fb.delta == doctest::Approx(med * 256.0).epsilon(1e-12));
}

TEST_CASE("estimated curvature tracks fisher under a correct likelihood") {
  Rng rng(26);
  const int n = 2000;
  ALScale lam(0.1);
  QuantileLevel q(0.8);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = ald_sample(rng, 0.0, lam, q);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  CurvatureEstimate e = estimate_curvature(CurvatureMethod::tkc, y, mu, lam, q, TkcConfig{});
  double fisher = fisher_curvature(lam, q);
  CHECK(e.c == doctest::Approx(fisher).epsilon(0.35));
  CHECK_FALSE(e.below_threshold);
}

TEST_CASE("estimated curvature leaves fisher under gaussian noise") {
  // Residual density at the tau-quantile is phi(z_tau) / sd, far above
  // tau(1-tau)/lambda^2 when lambda is held at 1.
  Rng rng(27);
  const int n = 2000;
  QuantileLevel q(0.8);
  double sd = 0.1;
  double shift = sd * normal_quantile(0.8);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = sd * rng.normal() - shift;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  ALScale lam(1.0);
  CurvatureEstimate e = estimate_curvature(CurvatureMethod::tkc, y, mu, lam, q, TkcConfig{});
  double truth = normal_pdf(normal_quantile(0.8)) / sd;
  double fisher = fisher_curvature(lam, q);
  CHECK(e.c > 10.0 * fisher);
  CHECK(e.c / truth > 0.5);
  CHECK(e.c / truth < 2.0);
}

TEST_CASE("population curvature from a known density") {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(4, 0.3989422804014327);
  Eigen::VectorXd d = population_curvature(f, ALScale(1.0));
  for (int i = 0; i < 4; ++i) CHECK(d[i] == doctest::Approx(0.3989422804014327).epsilon(1e-14));

  // AL noise at its own quantile: f = tau(1-tau)/lambda, so the population
  // curvature is the fisher information.
  double tau = 0.8, lam = 0.4;
  Eigen::VectorXd fa = Eigen::VectorXd::Constant(3, tau * (1.0 - tau) / lam);
  Eigen::VectorXd da = population_curvature(fa, ALScale(lam));
  for (int i = 0; i < 3; ++i) {
    CHECK(da[i] == doctest::Approx(ald_fisher_mu(ALScale(lam), QuantileLevel(tau))).epsilon(1e-13));
  }

  Eigen::VectorXd half = population_curvature(f, ALScale(2.0));
  for (int i = 0; i < 4; ++i) CHECK(half[i] == doctest::Approx(d[i] / 2.0).epsilon(1e-14));
}

#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lgqr/quadrature.hpp"
#include "lgqr/rng.hpp"

using namespace lgqr;

namespace {
constexpr double kSqrtPi = 1.7724538509055159;
}

TEST_CASE("gauss-hermite rules reproduce gaussian moments") {
  for (int n : {5, 20, 50, 150, 300}) {
    const GhRule& rule = gh_rule(n);
    REQUIRE(rule.x.size() == n);
    double w_sum = 0.0, wx2_sum = 0.0, wx_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      double w = std::exp(rule.log_weight[i] - rule.x[i] * rule.x[i]);
      w_sum += w;
      wx_sum += w * rule.x[i];
      wx2_sum += w * rule.x[i] * rule.x[i];
    }
    CHECK(w_sum == doctest::Approx(kSqrtPi).epsilon(1e-12));
    CHECK(std::abs(wx_sum) < 1e-12);
    if (n >= 2) CHECK(wx2_sum == doctest::Approx(kSqrtPi / 2.0).epsilon(1e-11));
  }
}

TEST_CASE("gauss-hermite nodes are symmetric and ordered") {
  const GhRule& rule = gh_rule(31);
  for (int i = 0; i + 1 < 31; ++i) CHECK(rule.x[i] < rule.x[i + 1]);
  for (int i = 0; i < 31; ++i) {
    CHECK(rule.x[i] == doctest::Approx(-rule.x[30 - i]).epsilon(1e-13));
    CHECK(rule.log_weight[i] == doctest::Approx(rule.log_weight[30 - i]).epsilon(1e-12));
  }
  // Odd rule: middle node at zero.
  CHECK(std::abs(rule.x[15]) < 1e-14);
}

TEST_CASE("oversized gauss-hermite rules are rejected") {
  CHECK_THROWS_AS(gh_rule(301), std::invalid_argument);
  CHECK_THROWS_AS(gh_rule(0), std::invalid_argument);
}

TEST_CASE("log_sum_exp handles extreme magnitudes") {
  Eigen::VectorXd v(2);
  v << 0.0, 0.0;
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  v << -1000.0, -1000.0;
  CHECK(log_sum_exp(v) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
  v << 1000.0, 0.0;
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0).epsilon(1e-15));
  Eigen::VectorXd one(1);
  one << -3.25;
  CHECK(log_sum_exp(one) == doctest::Approx(-3.25).epsilon(1e-15));
}

TEST_CASE("empty group integrates the prior to one") {
  Eigen::VectorXd resid(0);
  CHECK(agh_group(resid, 1.7, ALScale(0.5), QuantileLevel(0.8)) == 0.0);
}

TEST_CASE("single observation: agh matches a dense trapezoid") {
  // With one AL factor the integrand is piecewise log-linear times the prior;
  // adaptive GH and the long trapezoid must agree tightly.
  for (double r : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
    Eigen::VectorXd resid(1);
    resid << r;
    double agh = agh_group(resid, 1.0, ALScale(0.7), QuantileLevel(0.8), 50);
    double trap = trapezoid_group(resid, 1.0, ALScale(0.7), QuantileLevel(0.8), 200001);
    CHECK(agh == doctest::Approx(trap).epsilon(1e-8));
  }
}

TEST_CASE("random groups: agh matches a dense trapezoid") {
  Rng rng(91);
  for (int rep = 0; rep < 20; ++rep) {
    int n = 1 + rng.uniform_int(30);
    double sigma2 = 0.25 + 2.0 * rng.uniform();
    double lambda = 0.3 + 1.2 * rng.uniform();
    double tau = 0.2 + 0.6 * rng.uniform();
    Eigen::VectorXd resid(n);
    for (int i = 0; i < n; ++i) resid[i] = 2.5 * rng.normal();
    double agh = agh_group(resid, sigma2, ALScale(lambda), QuantileLevel(tau), 50);
    double trap =
        trapezoid_group(resid, sigma2, ALScale(lambda), QuantileLevel(tau), 200001);
    CHECK(agh == doctest::Approx(trap).epsilon(1e-6));
  }
}

TEST_CASE("a flat likelihood factors out of the integral") {
  // lambda so large the AL density is constant over the prior's support: the
  // integral is n * log(tau (1-tau) / lambda) plus a vanishing correction.
  Eigen::VectorXd resid(3);
  resid << 0.1, -0.2, 0.3;
  double lambda = 1e8;
  double expect = 3.0 * std::log(0.8 * 0.2 / lambda);
  double got = agh_group(resid, 1.0, ALScale(lambda), QuantileLevel(0.8));
  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("grouped log marginal sums per-group integrals") {
  GroupedDesign design = make_grouped({0, 0, 1, 1, 1, 3}, 4);
  Eigen::VectorXd y(6);
  y << 0.4, -0.2, 1.1, 0.9, 1.4, -0.7;
  Eigen::VectorXd offset(6);
  offset << 0.1, 0.0, -0.2, 0.3, 0.0, 0.5;
  double sigma2 = 0.8;
  ALScale lam(0.6);
  QuantileLevel tau(0.8);

  double total = exact_grouped_log_marginal(design, y, offset, sigma2, lam, tau);

  double by_hand = 0.0;
  Eigen::VectorXd r0(2), r1(3), r3(1);
  r0 << y[0] - offset[0], y[1] - offset[1];
  r1 << y[2] - offset[2], y[3] - offset[3], y[4] - offset[4];
  r3 << y[5] - offset[5];
  by_hand += agh_group(r0, sigma2, lam, tau);
  by_hand += agh_group(r1, sigma2, lam, tau);
  // Group 2 is empty and contributes zero.
  by_hand += agh_group(r3, sigma2, lam, tau);
  CHECK(total == doctest::Approx(by_hand).epsilon(1e-13));
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "lgqr/ald.hpp"
#include "lgqr/rng.hpp"

using namespace lgqr;

namespace {

// Same compensation as total_loglik so the loop oracle is bit-identical.
double neumaier_sum(const std::vector<double>& v) {
  double sum = 0.0, comp = 0.0;
  for (double term : v) {
    double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace

TEST_CASE("pinball loss piecewise values") {
  CHECK(pinball_loss(1.0 - 0.0, QuantileLevel(0.8)) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(pinball_loss(0.0 - 1.0, QuantileLevel(0.8)) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(pinball_loss(3.7 - 3.7, QuantileLevel(0.31)) == 0.0);
}

TEST_CASE("pinball loss equals max-form identity") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    double u = 6.0 * (rng.uniform() - 0.5);
    double tau = 0.02 + 0.96 * rng.uniform();
    double expect = tau * std::max(u, 0.0) + (1.0 - tau) * std::max(-u, 0.0);
    CHECK(pinball_loss(u, QuantileLevel(tau)) == expect);
  }
}

TEST_CASE("ald log density at fixed points") {
  CHECK(ald_log_pdf(0.0, 0.0, ALScale(1.0), QuantileLevel(0.5)) ==
        doctest::Approx(-1.3862943611198906).epsilon(1e-14));
  CHECK(ald_log_pdf(1.0, 0.0, ALScale(1.0), QuantileLevel(0.8)) ==
        doctest::Approx(-2.63258146374831).epsilon(1e-14));
}

TEST_CASE("ald log density is maximized at mu = y") {
  ALScale s(0.7);
  QuantileLevel q(0.8);
  double peak = ald_log_pdf(1.3, 1.3, s, q);
  for (int k = -400; k <= 400; ++k) {
    double mu = 1.3 + 0.01 * k;
    CHECK(ald_log_pdf(1.3, mu, s, q) <= peak + 1e-15);
  }
}

TEST_CASE("ald density integrates to one") {
  // The tails decay as exp(-(1-tau)|y|/lambda) below mu and exp(-tau y/lambda)
  // above, so each side spans 50 e-folds of its own rate. The kink sits on a
  // node of both pieces.
  ALScale s(1.0);
  QuantileLevel q(0.8);
  auto piece = [&](double a, double b, int n) {
    double h = (b - a) / n;
    double acc = 0.5 * (std::exp(ald_log_pdf(a, 0.0, s, q)) +
                        std::exp(ald_log_pdf(b, 0.0, s, q)));
    for (int k = 1; k < n; ++k) acc += std::exp(ald_log_pdf(a + k * h, 0.0, s, q));
    return acc * h;
  };
  double left = piece(-50.0 * s.lambda / (1.0 - q.tau), 0.0, 1000000);
  double right = piece(0.0, 50.0 * s.lambda / q.tau, 250000);
  CHECK(left + right == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("ald cdf and quantile are inverse") {
  ALScale s(0.4);
  QuantileLevel q(0.8);
  CHECK(ald_cdf(2.0, 2.0, s, q) == 0.8);  // CDF at mu is tau exactly
  CHECK(ald_quantile(0.8, 2.0, s, q) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(ald_quantile(0.5, 0.0, ALScale(1.0), QuantileLevel(0.5)) ==
        doctest::Approx(0.0).epsilon(1e-14));
  for (int k = 1; k < 100; ++k) {
    double u = k / 100.0;
    CHECK(ald_cdf(ald_quantile(u, 2.0, s, q), 2.0, s, q) ==
          doctest::Approx(u).epsilon(1e-10));
  }
}

TEST_CASE("score is piecewise constant with subgradient zero at the kink") {
  CHECK(ald_score_mu(2.0, 0.0, ALScale(1.0), QuantileLevel(0.8)) == 0.8);
  CHECK(ald_score_mu(-1.0, 0.0, ALScale(0.5), QuantileLevel(0.8)) ==
        doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(ald_score_mu(1.5, 1.5, ALScale(1.0), QuantileLevel(0.8)) == 0.0);
}

TEST_CASE("score matches central finite differences away from the kink") {
  ALScale s(0.6);
  QuantileLevel q(0.35);
  const double h = 1e-6;
  for (double y : {-3.0, -0.5, 0.4, 2.2}) {
    double mu = 0.1;  // |y - mu| > 10 h in every case
    double fd = (ald_log_pdf(y, mu + h, s, q) - ald_log_pdf(y, mu - h, s, q)) / (2 * h);
    CHECK(ald_score_mu(y, mu, s, q) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("fisher information values") {
  CHECK(ald_fisher_mu(ALScale(1.0), QuantileLevel(0.5)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(ald_fisher_mu(ALScale(0.1), QuantileLevel(0.8)) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("sampling oracle: score mean, score variance, tail mass, mean pinball") {
  const int n = 1000000;
  ALScale s(0.7);
  QuantileLevel q(0.8);
  Rng rng(42);
  double score_sum = 0.0, score_sq = 0.0, rho_sum = 0.0;
  int below = 0;
  for (int i = 0; i < n; ++i) {
    double y = ald_sample(rng, 1.0, s, q);
    double sc = ald_score_mu(y, 1.0, s, q);
    score_sum += sc;
    score_sq += sc * sc;
    rho_sum += pinball_loss(y - 1.0, q);
    if (y <= 1.0) ++below;
  }
  double fisher = ald_fisher_mu(s, q);
  double mean = score_sum / n;
  double var = score_sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(fisher / n));
  CHECK(var == doctest::Approx(fisher).epsilon(0.01));
  CHECK(static_cast<double>(below) / n == doctest::Approx(0.8).epsilon(0.0025));
  // E[rho_tau(eps)] = lambda for AL noise.
  CHECK(rho_sum / n == doctest::Approx(s.lambda).epsilon(0.01));
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    CHECK(ald_sample(a, 0.0, ALScale(1.0), QuantileLevel(0.8)) ==
          ald_sample(b, 0.0, ALScale(1.0), QuantileLevel(0.8)));
  }
}

TEST_CASE("ald moments") {
  // E = mu + lambda (1 - 2 tau) / (tau (1 - tau)); Var = lambda^2 (1 - 2 tau
  // + 2 tau^2) / (tau^2 (1 - tau)^2).
  CHECK(ald_mean(0.0, ALScale(1.0), QuantileLevel(0.8)) ==
        doctest::Approx(-3.75).epsilon(1e-13));
  CHECK(ald_variance(ALScale(1.0), QuantileLevel(0.8)) ==
        doctest::Approx(26.5625).epsilon(1e-13));
  Rng rng(5);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double y = ald_sample(rng, 0.0, ALScale(1.0), QuantileLevel(0.8));
    sum += y;
    sq += y * y;
  }
  double mean = sum / n;
  CHECK(mean == doctest::Approx(-3.75).epsilon(0.01));
  CHECK(sq / n - mean * mean == doctest::Approx(26.5625).epsilon(0.02));
}

TEST_CASE("total log-likelihood additivity and loop oracle") {
  ALScale s(0.3);
  QuantileLevel q(0.65);
  CHECK(total_loglik(Eigen::VectorXd(), Eigen::VectorXd(), s, q) == 0.0);

  Eigen::VectorXd y5 = Eigen::VectorXd::Constant(5, 1.7);
  Eigen::VectorXd mu5 = Eigen::VectorXd::Constant(5, 0.4);
  CHECK(total_loglik(y5, mu5, s, q) ==
        doctest::Approx(5.0 * ald_log_pdf(1.7, 0.4, s, q)).epsilon(1e-14));

  Rng rng(19);
  const int n = 257;
  Eigen::VectorXd y(n), mu(n);
  std::vector<double> terms(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 4.0 * (rng.uniform() - 0.5);
    mu[i] = 4.0 * (rng.uniform() - 0.5);
    terms[static_cast<size_t>(i)] = ald_log_pdf(y[i], mu[i], s, q);
  }
  CHECK(total_loglik(y, mu, s, q) == neumaier_sum(terms));
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "lgqr/mode.hpp"
#include "lgqr/rng.hpp"
#include "lgqr/simulate.hpp"

using namespace lgqr;

namespace {

double objective(const Eigen::VectorXd& y, const LatentDesign& d,
                 const PriorCovariance& prior, const Eigen::VectorXd& b, ALScale lam,
                 QuantileLevel tau, double tempering = 1.0) {
  return tempering * total_loglik(y, latent_effect(d, b), lam, tau) +
         prior.log_density(b);
}

// Every coordinate perturbation must lower the objective at a maximum.
void check_coordinate_optimality(const Eigen::VectorXd& y, const LatentDesign& d,
                                 const PriorCovariance& prior, const Eigen::VectorXd& b,
                                 ALScale lam, QuantileLevel tau, double tempering = 1.0) {
  double at_mode = objective(y, d, prior, b, lam, tau, tempering);
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    for (double eps : {1e-4, -1e-4}) {
      Eigen::VectorXd pert = b;
      pert[k] += eps;
      CHECK(objective(y, d, prior, pert, lam, tau, tempering) <= at_mode + 1e-10);
    }
  }
}

}  // namespace

TEST_CASE("symmetric kink at the prior mean") {
  LatentDesign d = make_grouped({0}, 1);
  PriorCovParams p;
  p.sigma2 = {1.0};
  PriorCovariance prior = PriorCovariance::build(d, p);
  Eigen::VectorXd y(1);
  y << 0.0;
  ModeResult res = find_mode(y, Eigen::VectorXd::Zero(1), d, prior, ALScale(1.0),
                             QuantileLevel(0.5));
  CHECK(res.converged);
  CHECK(std::abs(res.b[0]) < 1e-9);
}

TEST_CASE("interior solution against a grid oracle") {
  // One observation at y = 10: the likelihood gradient tau / lambda = 0.5
  // balances the prior gradient b at b = 0.5.
  LatentDesign d = make_grouped({0}, 1);
  PriorCovParams p;
  p.sigma2 = {1.0};
  PriorCovariance prior = PriorCovariance::build(d, p);
  Eigen::VectorXd y(1);
  y << 10.0;
  ModeResult res = find_mode(y, Eigen::VectorXd::Zero(1), d, prior, ALScale(1.0),
                             QuantileLevel(0.5));
  CHECK(res.b[0] == doctest::Approx(0.5).epsilon(1e-8));

  double best_b = 0.0, best_f = -1e300;
  for (int k = 0; k <= 1000000; ++k) {
    double b = k * 1e-6;
    Eigen::VectorXd bv(1);
    bv << b;
    double f = objective(y, d, prior, bv, ALScale(1.0), QuantileLevel(0.5));
    if (f > best_f) {
      best_f = f;
      best_b = b;
    }
  }
  CHECK(best_b == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(std::abs(res.b[0] - best_b) < 1e-5);
}

TEST_CASE("grouped mode is coordinate-wise optimal") {
  SimulatedDataset data =
      gen_grouped(5, 50, 1.0, QuantileLevel(0.8), {NoiseFamily::ald, 5.0, 0.0}, 31);
  PriorCovParams p;
  p.sigma2 = {1.0};
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ALScale lam(data.noise_scale);
  ModeResult res = find_mode(data.y, Eigen::VectorXd::Zero(data.y.size()), data.latent,
                             prior, lam, QuantileLevel(0.8));
  CHECK(res.converged);
  check_coordinate_optimality(data.y, data.latent, prior, res.b, lam, QuantileLevel(0.8));
}

TEST_CASE("crossed mode: multi-start agreement and optimality") {
  SimulatedDataset data = gen_crossed(4, 3, 15, 1.0, 2.0, QuantileLevel(0.8),
                                      {NoiseFamily::ald, 5.0, 0.0}, 33);
  PriorCovParams p;
  p.sigma2 = {1.0, 2.0};
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ALScale lam(data.noise_scale);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(data.y.size());

  ModeResult base = find_mode(data.y, offset, data.latent, prior, lam, QuantileLevel(0.8));
  CHECK(base.converged);
  check_coordinate_optimality(data.y, data.latent, prior, base.b, lam, QuantileLevel(0.8));

  Rng rng(34);
  for (int s = 0; s < 4; ++s) {
    Eigen::VectorXd start(base.b.size());
    for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = 2.0 * rng.normal();
    ModeResult other = find_mode(data.y, offset, data.latent, prior, lam,
                                 QuantileLevel(0.8), 1.0, {}, &start);
    CHECK((other.b - base.b).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("gp mode: converged and coordinate-wise optimal") {
  SimulatedDataset data =
      gen_gp(40, 1, 1.0, 0.25, QuantileLevel(0.8), {NoiseFamily::gaussian, 5.0, 0.0}, 35);
  PriorCovParams p;
  p.gp_sigma2 = 1.0;
  p.gp_length = 0.25;
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ALScale lam(0.2);
  // The correlated prior slows scoring near the kinks; drive the step
  // tolerance down so the perturbation check sees a converged point.
  ModeConfig tight;
  tight.step_tol = 1e-9;
  tight.rel_obj_tol = 1e-14;
  tight.max_iter = 2000;
  ModeResult res = find_mode(data.y, Eigen::VectorXd::Zero(40), data.latent, prior, lam,
                             QuantileLevel(0.8), 1.0, tight);
  CHECK(res.converged);
  check_coordinate_optimality(data.y, data.latent, prior, res.b, lam, QuantileLevel(0.8));
}

TEST_CASE("tempering scales the likelihood side of the objective") {
  SimulatedDataset data =
      gen_grouped(3, 30, 1.0, QuantileLevel(0.8), {NoiseFamily::ald, 5.0, 0.0}, 36);
  PriorCovParams p;
  p.sigma2 = {1.0};
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ALScale lam(data.noise_scale);
  double alpha = 0.5;
  ModeResult res = find_mode(data.y, Eigen::VectorXd::Zero(data.y.size()), data.latent,
                             prior, lam, QuantileLevel(0.8), alpha);
  CHECK(res.converged);
  check_coordinate_optimality(data.y, data.latent, prior, res.b, lam, QuantileLevel(0.8),
                              alpha);
  CHECK(res.objective ==
        doctest::Approx(objective(data.y, data.latent, prior, res.b, lam,
                                  QuantileLevel(0.8), alpha))
            .epsilon(1e-12));
}

TEST_CASE("warm starts reproduce the mode") {
  SimulatedDataset data = gen_crossed(5, 4, 20, 1.0, 2.0, QuantileLevel(0.8),
                                      {NoiseFamily::ald, 5.0, 0.0}, 37);
  PriorCovParams p;
  p.sigma2 = {1.0, 2.0};
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ALScale lam(data.noise_scale);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(data.y.size());
  ModeResult cold = find_mode(data.y, offset, data.latent, prior, lam, QuantileLevel(0.8));
  ModeResult warm = find_mode(data.y, offset, data.latent, prior, lam, QuantileLevel(0.8),
                              1.0, {}, &cold.b);
  CHECK((warm.b - cold.b).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("an exhausted iteration budget raises a mode error") {
  SimulatedDataset data = gen_crossed(4, 3, 15, 1.0, 2.0, QuantileLevel(0.8),
                                      {NoiseFamily::ald, 5.0, 0.0}, 38);
  PriorCovParams p;
  p.sigma2 = {1.0, 2.0};
  PriorCovariance prior = PriorCovariance::build(data.latent, p);
  ModeConfig cfg;
  cfg.max_iter = 0;
  bool threw = false;
  try {
    find_mode(data.y, Eigen::VectorXd::Zero(data.y.size()), data.latent, prior,
              ALScale(data.noise_scale), QuantileLevel(0.8), 1.0, cfg);
  } catch (const ModeError& e) {
    threw = true;
    CHECK(e.last_iterate().size() == latent_dim(data.latent));
    CHECK_FALSE(e.trace().empty());
  }
  CHECK(threw);
}

#pragma once

#include <Eigen/Core>

#include "lgqr/rng.hpp"

namespace lgqr {

struct QuantileLevel {
  double tau;
  explicit QuantileLevel(double t);
};

struct ALScale {
  double lambda;
  explicit ALScale(double l);
};

// rho_tau(u) = u * (tau - 1{u < 0})
double pinball_loss(double u, QuantileLevel q);

// Asymmetric Laplace density p(y | mu, lambda) = tau(1-tau)/lambda *
// exp(-rho_tau(y - mu)/lambda). Its tau-quantile is mu by construction.
double ald_log_pdf(double y, double mu, ALScale s, QuantileLevel q);
double ald_cdf(double y, double mu, ALScale s, QuantileLevel q);
double ald_quantile(double u, double mu, ALScale s, QuantileLevel q);

// d/dmu log p. At the kink y == mu the subgradient convention is 0, which is
// what the mode solver relies on for its stopping test.
double ald_score_mu(double y, double mu, ALScale s, QuantileLevel q);

// Fisher information for mu: tau(1-tau)/lambda^2, independent of y.
double ald_fisher_mu(ALScale s, QuantileLevel q);

double ald_mean(double mu, ALScale s, QuantileLevel q);
double ald_variance(ALScale s, QuantileLevel q);

// Inverse-CDF sampling; one uniform per draw.
double ald_sample(Rng& rng, double mu, ALScale s, QuantileLevel q);

// Sum of log densities with Neumaier compensation. The compensation matters:
// curvature estimates difference these sums at nearby mu, and the kernel
// identity test holds them to 1e-12 relative.
double total_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                    ALScale s, QuantileLevel q);

}  // namespace lgqr

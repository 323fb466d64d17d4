#include "lgqr/ald.hpp"

#include <cmath>
#include <stdexcept>

namespace lgqr {

QuantileLevel::QuantileLevel(double t) : tau(t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw std::invalid_argument("QuantileLevel: tau must lie in (0,1)");
  }
}

ALScale::ALScale(double l) : lambda(l) {
  if (!(l > 0.0) || !std::isfinite(l)) {
    throw std::invalid_argument("ALScale: lambda must be positive and finite");
  }
}

double pinball_loss(double u, QuantileLevel q) {
  return u * (q.tau - (u < 0.0 ? 1.0 : 0.0));
}

double ald_log_pdf(double y, double mu, ALScale s, QuantileLevel q) {
  return std::log(q.tau * (1.0 - q.tau)) - std::log(s.lambda) -
         pinball_loss(y - mu, q) / s.lambda;
}

double ald_cdf(double y, double mu, ALScale s, QuantileLevel q) {
  double z = y - mu;
  if (z < 0.0) return q.tau * std::exp((1.0 - q.tau) * z / s.lambda);
  return 1.0 - (1.0 - q.tau) * std::exp(-q.tau * z / s.lambda);
}

double ald_quantile(double u, double mu, ALScale s, QuantileLevel q) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("ald_quantile: u must lie in (0,1)");
  }
  if (u < q.tau) return mu + s.lambda / (1.0 - q.tau) * std::log(u / q.tau);
  return mu - s.lambda / q.tau * std::log((1.0 - u) / (1.0 - q.tau));
}

double ald_score_mu(double y, double mu, ALScale s, QuantileLevel q) {
  if (y > mu) return q.tau / s.lambda;
  if (y < mu) return (q.tau - 1.0) / s.lambda;
  return 0.0;
}

double ald_fisher_mu(ALScale s, QuantileLevel q) {
  return q.tau * (1.0 - q.tau) / (s.lambda * s.lambda);
}

double ald_mean(double mu, ALScale s, QuantileLevel q) {
  return mu + s.lambda * (1.0 - 2.0 * q.tau) / (q.tau * (1.0 - q.tau));
}

double ald_variance(ALScale s, QuantileLevel q) {
  double t = q.tau, l = s.lambda;
  return l * l * (1.0 - 2.0 * t + 2.0 * t * t) / (t * t * (1.0 - t) * (1.0 - t));
}

double ald_sample(Rng& rng, double mu, ALScale s, QuantileLevel q) {
  return ald_quantile(rng.uniform(), mu, s, q);
}

double total_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                    ALScale s, QuantileLevel q) {
  if (y.size() != mu.size()) {
    throw std::invalid_argument("total_loglik: y and mu must have equal length");
  }
  const double c0 = std::log(q.tau * (1.0 - q.tau)) - std::log(s.lambda);
  double sum = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double term = c0 - pinball_loss(y[i] - mu[i], q) / s.lambda;
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

}  // namespace lgqr

#include "lgqr/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "lgqr/errors.hpp"

namespace lgqr {

double loglik_drop(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double delta,
                   ALScale s, QuantileLevel q) {
  Eigen::VectorXd shifted = mu.array() + delta;
  return total_loglik(y, mu, s, q) - total_loglik(y, shifted, s, q);
}

std::pair<double, double> dll(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                              double delta, ALScale s, QuantileLevel q) {
  if (!(delta > 0.0)) throw std::invalid_argument("dll: delta must be positive");
  return {loglik_drop(y, mu, delta, s, q), loglik_drop(y, mu, -delta, s, q)};
}

double fisher_curvature(ALScale s, QuantileLevel q) { return ald_fisher_mu(s, q); }

CurvatureEstimate tkc_estimate(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                               double delta, ALScale s, QuantileLevel q) {
  auto [du, dl] = dll(y, mu, delta, s, q);
  double n = static_cast<double>(y.size());
  double c = (du + dl) / (n * delta * delta);
  if (!(c > 0.0)) {
    throw DegenerateCurvature("tkc_estimate: curvature " + std::to_string(c) +
                              " at delta " + std::to_string(delta) +
                              " (all residuals outside the bandwidth)");
  }
  CurvatureEstimate out;
  out.method = CurvatureMethod::tkc;
  out.c = c;
  out.delta = delta;
  return out;
}

double tkc_kernel_form(const Eigen::VectorXd& resid, double h, ALScale s) {
  if (!(h > 0.0)) throw std::invalid_argument("tkc_kernel_form: h must be positive");
  double sum = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    double az = std::abs(resid[i]);
    if (az >= h) continue;
    double term = (1.0 - az / h) / h;
    double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
  }
  return (sum + comp) / (static_cast<double>(resid.size()) * s.lambda);
}

BandwidthChoice select_bandwidth(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                 ALScale s, QuantileLevel q, const TkcConfig& cfg) {
  const Eigen::Index n = y.size();
  // No residuals is the extreme of every residual falling outside the
  // bandwidth, so callers get the same fallback path.
  if (n == 0) throw DegenerateCurvature("select_bandwidth: empty data");
  std::vector<double> a(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) a[static_cast<size_t>(i)] = std::abs(y[i] - mu[i]);
  std::nth_element(a.begin(), a.begin() + n / 2, a.end());
  double scale = a[static_cast<size_t>(n / 2)];
  if (n % 2 == 0) {
    double lo = *std::max_element(a.begin(), a.begin() + n / 2);
    scale = 0.5 * (lo + scale);
  }
  if (!(scale > 0.0)) scale = std::max(s.lambda, 1e-12);

  BandwidthChoice best;
  best.r_squared = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (int k = cfg.grid_lo; k <= cfg.grid_hi; ++k) {
    double delta = scale * std::ldexp(1.0, k);
    auto [du, dl] = dll(y, mu, delta, s, q);
    if (std::min(du, dl) < cfg.min_drop) continue;
    double c = (du + dl) / (static_cast<double>(n) * delta * delta);
    if (!(c > 0.0) || !std::isfinite(c)) continue;
    // Quadratic fit quality at probe offsets; the candidate's own drops serve
    // as the +-delta probes.
    double probes[4] = {-delta, -0.5 * delta, 0.5 * delta, delta};
    double truth[4] = {-dl, -loglik_drop(y, mu, -0.5 * delta, s, q),
                       -loglik_drop(y, mu, 0.5 * delta, s, q), -du};
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean *= 0.25;
    double sstot = 0.0, ssres = 0.0;
    for (int j = 0; j < 4; ++j) {
      double pred = -0.5 * static_cast<double>(n) * c * probes[j] * probes[j];
      sstot += (truth[j] - mean) * (truth[j] - mean);
      ssres += (truth[j] - pred) * (truth[j] - pred);
    }
    double r2;
    if (sstot > 0.0) {
      r2 = 1.0 - ssres / sstot;
    } else {
      r2 = ssres == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    if (r2 > best.r_squared) {
      best.delta = delta;
      best.r_squared = r2;
      found = true;
    }
  }
  if (found) return best;
  // Every candidate fell below the drop threshold: report the largest one and
  // flag it so callers can warn.
  BandwidthChoice fallback;
  fallback.delta = scale * std::ldexp(1.0, cfg.grid_hi);
  fallback.r_squared = 0.0;
  fallback.below_threshold = true;
  return fallback;
}

CurvatureEstimate estimate_curvature(CurvatureMethod method, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& mu, ALScale s,
                                     QuantileLevel q, const TkcConfig& cfg) {
  if (method == CurvatureMethod::fisher) {
    CurvatureEstimate out;
    out.method = CurvatureMethod::fisher;
    out.c = fisher_curvature(s, q);
    return out;
  }
  BandwidthChoice bw = select_bandwidth(y, mu, s, q, cfg);
  CurvatureEstimate out = tkc_estimate(y, mu, bw.delta, s, q);
  out.r_squared = bw.r_squared;
  out.below_threshold = bw.below_threshold;
  return out;
}

Eigen::VectorXd population_curvature(const Eigen::VectorXd& density_at_quantile,
                                     ALScale s) {
  return density_at_quantile / s.lambda;
}

}  // namespace lgqr

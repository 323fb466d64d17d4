#pragma once

#include <Eigen/Core>
#include <utility>

#include "lgqr/ald.hpp"

namespace lgqr {

enum class CurvatureMethod { fisher, tkc };

struct TkcConfig {
  // Minimum symmetric log-likelihood drop for a bandwidth to be admissible.
  // 0.1 for mixed models; GP models use 10 (set by make_model).
  double min_drop = 0.1;
  // Candidate bandwidths are s * 2^k for k in [grid_lo, grid_hi], with s the
  // median absolute residual.
  int grid_lo = -8;
  int grid_hi = 8;
};

struct CurvatureEstimate {
  CurvatureMethod method = CurvatureMethod::fisher;
  double c = 0.0;      // per-observation curvature
  double delta = 0.0;  // bandwidth used (tkc only)
  double r_squared = 0.0;
  bool below_threshold = false;
};

struct BandwidthChoice {
  double delta = 0.0;
  double r_squared = 0.0;
  bool below_threshold = false;
};

// ll(mu) - ll(mu + delta * 1), evaluated as two full likelihood sums.
double loglik_drop(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double delta,
                   ALScale s, QuantileLevel q);

// (upper, lower) drops at +delta and -delta.
std::pair<double, double> dll(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                              double delta, ALScale s, QuantileLevel q);

double fisher_curvature(ALScale s, QuantileLevel q);

// Second-difference curvature (dll_upper + dll_lower) / (n delta^2) at a given
// bandwidth. Throws DegenerateCurvature when the estimate is not positive.
CurvatureEstimate tkc_estimate(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                               double delta, ALScale s, QuantileLevel q);

// Triangular kernel density form: 1/(n lambda) * sum_i (1 - |z_i|/h)/h over
// |z_i| < h. Algebraically identical to tkc_estimate at delta = h; the test
// suite holds the two routes to 1e-12 relative.
double tkc_kernel_form(const Eigen::VectorXd& resid, double h, ALScale s);

// Bandwidth search: among admissible candidates (both drops >= min_drop), pick
// the one whose implied quadratic best matches the log-likelihood at probe
// offsets {+-delta/2, +-delta} by R^2, ties toward the smallest delta. If no
// candidate is admissible, returns the largest with below_threshold set.
BandwidthChoice select_bandwidth(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                 ALScale s, QuantileLevel q, const TkcConfig& cfg);

CurvatureEstimate estimate_curvature(CurvatureMethod method, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& mu, ALScale s,
                                     QuantileLevel q, const TkcConfig& cfg);

// Population curvature f(mu*_i)/lambda per observation, for a known density at
// the true quantile.
Eigen::VectorXd population_curvature(const Eigen::VectorXd& density_at_quantile,
                                     ALScale s);

}  // namespace lgqr

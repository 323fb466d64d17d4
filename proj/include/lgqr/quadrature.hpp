#pragma once

#include <Eigen/Dense>

#include "lgqr/ald.hpp"
#include "lgqr/designs.hpp"

namespace lgqr {

// Gauss-Hermite rule for integrals against exp(-x^2). log_weight holds
// log(w_i * exp(x_i^2)), which stays representable for large rules where the
// raw weights underflow.
struct GhRule {
  Eigen::VectorXd x;
  Eigen::VectorXd log_weight;
};

// Cached by node count; thread safe. Node counts above 300 are rejected
// because the weight recurrence loses the leading digits there.
const GhRule& gh_rule(int nodes);

// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Eigen::VectorXd& v);

// log integral exp(sum_i log AL(r_i | b)) N(b | 0, sigma2) db for one group,
// with resid r_i = y_i - offset_i. The AL log likelihood is piecewise linear
// in b with kinks at the residuals, so on each inter-kink segment the
// integrand is a scaled gaussian slice with a closed form; the result is
// their log-sum, exact up to round-off. nodes is kept for interface
// compatibility and only validated; scale_fallback is always cleared (a
// Gauss-Hermite version needed it, the closed form cannot degenerate).
double agh_group(const Eigen::VectorXd& resid, double sigma2, ALScale lambda,
                 QuantileLevel tau, int nodes = 50, bool* scale_fallback = nullptr);

// Dense trapezoid reference for the same integral: mode centered, extending
// half_width_sds prior standard deviations to each side.
double trapezoid_group(const Eigen::VectorXd& resid, double sigma2, ALScale lambda,
                       QuantileLevel tau, int points = 20001,
                       double half_width_sds = 12.0);

// Log marginal likelihood of a grouped model by per-group adaptive GH,
// compensated summation across groups. Groups without observations
// contribute exactly zero.
double exact_grouped_log_marginal(const GroupedDesign& design, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& offset, double sigma2,
                                  ALScale lambda, QuantileLevel tau, int nodes = 50,
                                  bool* any_scale_fallback = nullptr);

}  // namespace lgqr

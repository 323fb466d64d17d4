#pragma once

#include <Eigen/Core>
#include <vector>

#include "lgqr/ald.hpp"

namespace lgqr {

// Scale convention for the sandwich variance of a group-level quantile.
//   as_paper:      tau(1-tau) / (n c^2)
//   density_scale: tau(1-tau) / (n (c lambda)^2)
// c estimates f(q)/lambda, so c*lambda estimates the response density at the
// quantile and density_scale is the classic sandwich. The two agree when the
// working scale is held at 1.
enum class SandwichScale { as_paper, density_scale };

double sandwich_variance(QuantileLevel tau, Eigen::Index n_group, double c_hat,
                         SandwichScale scale = SandwichScale::as_paper,
                         double lambda_hat = 1.0);

struct Interval {
  double lo;
  double hi;
};

Interval wald_interval(double center, double variance, double level);

// Fraction of truth values inside their interval, endpoints included.
double empirical_coverage(const Eigen::VectorXd& truth, const std::vector<Interval>& iv);

// Split-conformal offset: the ceil((n+1)(1-alpha))-th smallest calibration
// score. When that rank exceeds n the finite-sample guarantee needs infinite
// intervals; infinite_width reports it and offset is +inf.
struct CqrOffset {
  double offset;
  bool infinite_width;
};

CqrOffset cqr_calibrate(std::vector<double> scores, double alpha);

// Convenience form over a calibration set: scores computed from the raw
// intervals (scaled by sigma when given, the uncertainty-aware variant).
CqrOffset cqr_calibrate(const Eigen::VectorXd& y_cal, const std::vector<Interval>& pred,
                        double alpha, const Eigen::VectorXd* sigma = nullptr);

// Conformity score max(lo - y, y - hi); negative inside the interval. The sd
// overload scales by a per-point spread for locally adaptive widths.
double cqr_score(double y, const Interval& iv);
double cqr_score(double y, const Interval& iv, double sd);

Interval cqr_apply(const Interval& iv, double offset);
Interval cqr_apply(const Interval& iv, double offset, double sd);

}  // namespace lgqr

#pragma once

#include <Eigen/Core>
#include <vector>

#include "lgqr/ald.hpp"
#include "lgqr/designs.hpp"
#include "lgqr/errors.hpp"

namespace lgqr {

struct ModeConfig {
  int max_iter = 200;
  double rel_obj_tol = 1e-8;
  double step_tol = 1e-6;  // max-norm of the accepted step
  int max_backtracks = 50;
  double armijo_c = 1e-4;
};

struct ModeResult {
  Eigen::VectorXd b;   // posterior mode
  Eigen::VectorXd mu;  // offset + Z b at the mode
  double objective = 0.0;  // tempering * loglik + prior log density
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

class ModeError : public NumericalError {
 public:
  ModeError(const std::string& msg, Eigen::VectorXd last, std::vector<double> trace)
      : NumericalError(msg), last_(std::move(last)), trace_(std::move(trace)) {}
  const Eigen::VectorXd& last_iterate() const { return last_; }
  const std::vector<double>& trace() const { return trace_; }

 private:
  Eigen::VectorXd last_;
  std::vector<double> trace_;
};

// Maximizes tempering * sum_i log p(y_i | offset_i + (Zb)_i, lambda) +
// log N(b; 0, K) by damped Fisher scoring: the Newton system uses the Fisher
// diagonal tau(1-tau)/lambda^2 (constant over iterations, so the system is
// factored once), with Armijo backtracking on the exact objective. The
// objective is strictly concave, so the mode is unique.
ModeResult find_mode(const Eigen::VectorXd& y, const Eigen::VectorXd& offset,
                     const LatentDesign& design, const PriorCovariance& prior,
                     ALScale lambda, QuantileLevel tau, double tempering = 1.0,
                     const ModeConfig& cfg = {},
                     const Eigen::VectorXd* warm_start = nullptr);

}  // namespace lgqr

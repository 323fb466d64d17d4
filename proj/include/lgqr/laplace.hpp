#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "lgqr/ald.hpp"
#include "lgqr/curvature.hpp"
#include "lgqr/designs.hpp"
#include "lgqr/mode.hpp"

namespace lgqr {

struct LaplaceConfig {
  CurvatureMethod curvature = CurvatureMethod::tkc;
  TkcConfig tkc;
  double tempering = 1.0;  // alpha in (0,1]; multiplies likelihood and curvature
  ModeConfig mode;
};

struct QuantileModel {
  QuantileLevel tau;
  Eigen::MatrixXd X;  // n x p fixed-effect design; p = 0 when absent
  LatentDesign latent;
  LaplaceConfig approx;
};

// Sets the design-dependent defaults (TKC drop threshold 0.1 for mixed models,
// 10 for GP designs).
QuantileModel make_model(QuantileLevel tau, LatentDesign latent,
                         Eigen::MatrixXd X = Eigen::MatrixXd(),
                         CurvatureMethod method = CurvatureMethod::tkc);

struct LaplaceResult {
  double log_marginal = 0.0;
  ModeResult mode;
  CurvatureEstimate curvature;  // the estimate in use; method reflects fallback
  bool curvature_fallback = false;
  double c_eff = 0.0;  // tempering * curvature.c, the weight inside W
  PosteriorPrecision posterior;
  PriorCovariance prior;
};

// log p(y | b_hat) + log pi(b_hat) - 1/2 logdet(K^-1 + W) + (m/2) log 2pi,
// computed with the prior normalizer cancelled analytically so the
// zero-observation case returns exactly 0.
LaplaceResult laplace_log_marginal(const QuantileModel& model, const Eigen::VectorXd& y,
                                   const PriorCovParams& theta,
                                   const Eigen::VectorXd& beta, ALScale lambda,
                                   const Eigen::VectorXd* warm_start = nullptr);

struct FitConfig {
  int max_iter = 200;
  double rel_tol = 1e-8;
  int restarts = 3;  // first from the moment initializer, the rest jittered
  double jitter_sd = 0.3;
  double fd_step = 1e-5;  // central differences, step h * (1 + |x|)
  int max_backtracks = 40;
  std::uint64_t seed = 0;
};

struct FitWarnings {
  bool curvature_fallback = false;
  bool bandwidth_below_threshold = false;
  bool optimizer_hit_max_iter = false;
};

struct FitResult {
  PriorCovParams theta;
  Eigen::VectorXd beta;
  double lambda = 1.0;
  double log_marginal = 0.0;
  LaplaceResult approx;  // evaluated at the optimum
  std::vector<double> trace;  // accepted log-marginal values across restarts
  int evaluations = 0;
  FitWarnings warnings;
};

// Empirical Bayes: maximizes the Laplace log-marginal over (log theta, beta,
// log lambda) by BFGS with central finite-difference gradients. Deterministic
// given (seed, data, config).
FitResult fit(const QuantileModel& model, const Eigen::VectorXd& y,
              const FitConfig& cfg = {});

// Everything prediction needs, serializable without the training responses.
struct PosteriorSummary {
  LatentDesign latent;
  PriorCovParams theta;
  Eigen::VectorXd beta;
  double lambda = 1.0;
  Eigen::VectorXd b_hat;
  double c_eff = 0.0;
};
PosteriorSummary summarize(const QuantileModel& model, const FitResult& fit);

struct PredictRequest {
  Eigen::MatrixXd X;           // n* x p, may be 0 columns
  std::vector<int> group;      // grouped/crossed first factor; id outside
                               // [0, levels) means an unseen level
  std::vector<int> group2;     // crossed second factor
  Eigen::MatrixXd coords;      // GP inputs
};

struct Prediction {
  Eigen::VectorXd quantile;
  Eigen::VectorXd latent_var;  // posterior variance of the latent part
};

Prediction predict(const PosteriorSummary& s, const PredictRequest& req);

}  // namespace lgqr

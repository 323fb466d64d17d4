#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lgqr/calibration.hpp"
#include "lgqr/curvature.hpp"
#include "lgqr/laplace.hpp"
#include "lgqr/simulate.hpp"

namespace lgqr {

// Runs body(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// The first exception thrown by any body is rethrown on the caller.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

enum class DesignKind { grouped, crossed, gp };

struct ExperimentConfig {
  DesignKind design = DesignKind::grouped;
  NoiseSpec noise;
  double tau = 0.8;
  int m = 100;
  int n_j = 100;
  int m2 = 50;  // crossed second factor
  double sigma2_u = 1.0;
  double sigma2_2 = 2.0;  // crossed second variance
  int n = 1000;           // gp rows
  int dim = 2;            // gp input dimension
  double gp_sigma2 = 1.0;
  double gp_length = 0.25;
  int replications = 10;
  double train_frac = 0.75;
  std::vector<CurvatureMethod> methods = {CurvatureMethod::tkc,
                                          CurvatureMethod::fisher};
  double min_drop = 0.0;  // <= 0 keeps the design default
  std::uint64_t seed = 1;
  int threads = 0;
};

struct RepOutcome {
  bool failed = false;
  std::string error;
  double rmse = 0.0;
  double qloss = 0.0;
  double sigma2_sq_err = 0.0;
  double runtime_s = 0.0;
};

struct MetricRow {
  std::string design;
  std::string noise;
  int m = 0;
  int n_j = 0;
  std::string method;
  std::string metric;
  double mean = 0.0;
  double se = 0.0;
  double runtime_s = 0.0;  // mean per-replication fit+predict seconds
};

struct ExperimentReport {
  // outcomes[k][r]: method k (config order), replication r
  std::vector<std::vector<RepOutcome>> outcomes;
  std::vector<MetricRow> rows;
};

// Per replication: generate, split train/test, fit each method on the train
// rows, predict the test rows, score against the true quantiles. Failures are
// recorded per replication and excluded from the aggregates.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct MllConfig {
  int m = 20;
  std::vector<int> group_sizes = {100, 1000};
  double tau = 0.8;
  double sigma2_u = 1.0;
  // Fixed unit noise scale by default: AL lambda = 1 when correctly
  // specified, Gaussian sd = 1 when misspecified.
  NoiseSpec noise{NoiseFamily::ald, 5.0, 1.0};
  int datasets = 20;
  int nodes = 50;
  std::vector<CurvatureMethod> methods = {CurvatureMethod::tkc,
                                          CurvatureMethod::fisher};
  std::uint64_t seed = 1;
  int threads = 0;
};

// One row per group: the grouped-model marginal factorizes over groups, so
// the group integrals are the quantities adaptive GH actually computes and
// the relative error stays interpretable (the product over even 20 groups
// has a relative deviation dominated by noise that cancels nowhere).
struct MllRow {
  int n_j = 0;
  std::string method;
  int dataset = 0;
  int group = -1;
  double log_marginal = 0.0;  // per-group Laplace value at that method's own estimates
  double oracle = 0.0;        // adaptive GH for the same group at the same estimates
  double rel_error = 0.0;     // |expm1(log_marginal - oracle)|
  bool failed = false;        // fit failure: one row for the whole dataset
  std::string error;
};

// Each method gets its own empirical-Bayes fit; the quadrature reference is
// evaluated at that method's estimates so the comparison isolates the
// curvature approximation.
std::vector<MllRow> run_mll_check(const MllConfig& cfg);

struct CoverageConfig {
  int m = 100;
  int n_j = 100;
  double tau = 0.8;
  double sigma2_u = 1.0;
  NoiseSpec noise{NoiseFamily::gaussian, 5.0};
  double level = 0.9;
  SandwichScale scale = SandwichScale::density_scale;
  int replications = 10;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct CoverageRow {
  int rep = 0;
  std::uint64_t data_seed = 0;
  double sandwich_coverage = 0.0;
  double naive_coverage = 0.0;
  double sandwich_mean_width = 0.0;
  double naive_mean_width = 0.0;
  bool failed = false;
  std::string error;
};

// Grouped designs only: fits with TKC curvature on the full data, then builds
// per-group Wald intervals from per-group curvature estimates (global fit
// curvature when a group degenerates) and from the naive posterior variance.
std::vector<CoverageRow> run_coverage(const CoverageConfig& cfg);

}  // namespace lgqr

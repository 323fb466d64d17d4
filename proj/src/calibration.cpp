#include "lgqr/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lgqr/dist.hpp"

namespace lgqr {

double sandwich_variance(QuantileLevel tau, Eigen::Index n_group, double c_hat,
                         SandwichScale scale, double lambda_hat) {
  if (n_group <= 0) throw std::invalid_argument("sandwich_variance: empty group");
  if (!(c_hat > 0.0)) {
    throw std::invalid_argument("sandwich_variance: curvature must be positive");
  }
  double c = c_hat;
  if (scale == SandwichScale::density_scale) {
    if (!(lambda_hat > 0.0)) {
      throw std::invalid_argument("sandwich_variance: scale must be positive");
    }
    c *= lambda_hat;
  }
  return tau.tau * (1.0 - tau.tau) / (static_cast<double>(n_group) * c * c);
}

Interval wald_interval(double center, double variance, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("wald_interval: level must be in (0, 1)");
  }
  if (!(variance >= 0.0)) {
    throw std::invalid_argument("wald_interval: variance must be nonnegative");
  }
  double half = normal_quantile(0.5 + 0.5 * level) * std::sqrt(variance);
  return Interval{center - half, center + half};
}

double empirical_coverage(const Eigen::VectorXd& truth,
                          const std::vector<Interval>& iv) {
  if (truth.size() != static_cast<Eigen::Index>(iv.size()) || truth.size() == 0) {
    throw std::invalid_argument("empirical_coverage: size mismatch");
  }
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const auto& v = iv[static_cast<size_t>(i)];
    if (truth[i] >= v.lo && truth[i] <= v.hi) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

CqrOffset cqr_calibrate(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw std::invalid_argument("cqr_calibrate: no scores");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("cqr_calibrate: alpha must be in (0, 1)");
  }
  auto n = scores.size();
  auto rank = static_cast<size_t>(
      std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha)));
  if (rank > n) {
    return CqrOffset{std::numeric_limits<double>::infinity(), true};
  }
  std::nth_element(scores.begin(), scores.begin() + (rank - 1), scores.end());
  return CqrOffset{scores[rank - 1], false};
}

CqrOffset cqr_calibrate(const Eigen::VectorXd& y_cal, const std::vector<Interval>& pred,
                        double alpha, const Eigen::VectorXd* sigma) {
  if (y_cal.size() != static_cast<Eigen::Index>(pred.size())) {
    throw std::invalid_argument("cqr_calibrate: size mismatch");
  }
  if (sigma && sigma->size() != y_cal.size()) {
    throw std::invalid_argument("cqr_calibrate: sigma size mismatch");
  }
  std::vector<double> scores(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    auto idx = static_cast<Eigen::Index>(i);
    scores[i] = sigma ? cqr_score(y_cal[idx], pred[i], (*sigma)[idx])
                      : cqr_score(y_cal[idx], pred[i]);
  }
  return cqr_calibrate(std::move(scores), alpha);
}

double cqr_score(double y, const Interval& iv) {
  return std::max(iv.lo - y, y - iv.hi);
}

double cqr_score(double y, const Interval& iv, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("cqr_score: sd must be positive");
  return cqr_score(y, iv) / sd;
}

Interval cqr_apply(const Interval& iv, double offset) {
  return Interval{iv.lo - offset, iv.hi + offset};
}

Interval cqr_apply(const Interval& iv, double offset, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("cqr_apply: sd must be positive");
  return Interval{iv.lo - offset * sd, iv.hi + offset * sd};
}

}  // namespace lgqr

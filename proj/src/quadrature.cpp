#include "lgqr/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace lgqr {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kQuarterLogPi = 0.28618247146235004;  // log(pi)/4

GhRule build_gh_rule(int n) {
  GhRule rule;
  if (n == 1) {
    rule.x = Eigen::VectorXd::Zero(1);
    rule.log_weight = Eigen::VectorXd::Constant(1, 2.0 * kQuarterLogPi);
    return rule;
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double off = std::sqrt(0.5 * k);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi, Eigen::EigenvaluesOnly);
  rule.x = es.eigenvalues();
  rule.log_weight.resize(n);
  // Christoffel identity: w_i exp(x_i^2) = 1 / sum_{k<n} psi_k(x_i)^2 with
  // orthonormal Hermite functions psi. The upward recurrence is stable: psi_k
  // grows with k until the turning point, then oscillates.
  for (int i = 0; i < n; ++i) {
    double x = rule.x[i];
    double prev = 0.0;
    double cur = std::exp(-kQuarterLogPi - 0.5 * x * x);  // psi_0
    double sum = cur * cur;
    for (int k = 0; k + 1 < n; ++k) {
      double next = x * std::sqrt(2.0 / (k + 1)) * cur -
                    std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    rule.log_weight[i] = -std::log(sum);
  }
  return rule;
}

// Unnormalized log integrand at latent value b.
double group_log_density(const Eigen::VectorXd& resid, double b, double sigma2,
                         ALScale lambda, QuantileLevel tau) {
  double c0 = std::log(tau.tau * (1.0 - tau.tau)) - std::log(lambda.lambda);
  double s = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    s += c0 - pinball_loss(resid[i] - b, tau) / lambda.lambda;
  }
  s += -0.5 * b * b / sigma2 - 0.5 * std::log(2.0 * M_PI * sigma2);
  return s;
}

// exp(x^2) erfc(x) for x >= 0 without the over/underflow of the raw factors.
double erfcx(double x) {
  if (x < 15.0) return std::exp(x * x + std::log(std::erfc(x)));
  // Asymptotic series; at x = 15 the truncation is below 2e-15 relative.
  double inv2 = 1.0 / (2.0 * x * x);
  double s = 1.0, t = 1.0;
  for (int k = 1; k <= 8; ++k) {
    t *= -(2.0 * k - 1.0) * inv2;
    s += t;
  }
  return s / (x * std::sqrt(M_PI));
}

// log(Phi(b) - Phi(a)) for a < b, stable in both tails. Cancellation for
// narrow intervals is self-limiting: the relative error grows like the
// reciprocal of the interval mass, so the absolute error stays at round-off.
double log_phi_diff(double a, double b) {
  constexpr double kRoot2 = 1.4142135623730951;
  if (a > 0.0) {
    // Upper tail: Phi_bar(a) - Phi_bar(b) with the e^{-a^2/2} envelope split
    // off so the erfcx difference stays on a representable scale.
    double diff = erfcx(a / kRoot2);
    if (!std::isinf(b)) diff -= erfcx(b / kRoot2) * std::exp(0.5 * (a * a - b * b));
    return std::log(0.5) - 0.5 * a * a + std::log(diff);
  }
  if (b < 0.0) return log_phi_diff(-b, -a);
  double pa = std::isinf(a) ? 0.0 : 0.5 * std::erfc(-a / kRoot2);
  double pb_bar = std::isinf(b) ? 0.0 : 0.5 * std::erfc(b / kRoot2);
  return std::log1p(-(pa + pb_bar));
}

double group_subgradient(const Eigen::VectorXd& resid, double b, double sigma2,
                         ALScale lambda, QuantileLevel tau) {
  double g = -b / sigma2;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    g += ald_score_mu(resid[i], b, lambda, tau);
  }
  return g;
}

// The subgradient is strictly decreasing in b, so the maximizer is the unique
// sign change; bisection needs no smoothness.
double group_mode(const Eigen::VectorXd& resid, double sigma2, ALScale lambda,
                  QuantileLevel tau) {
  double lo = std::min(0.0, resid.minCoeff()) - 1.0;
  double hi = std::max(0.0, resid.maxCoeff()) + 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (group_subgradient(resid, mid, sigma2, lambda, tau) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-13 * (1.0 + std::abs(lo))) break;
  }
  return 0.5 * (lo + hi);
}
}  // namespace

const GhRule& gh_rule(int nodes) {
  if (nodes < 1 || nodes > 300) {
    throw std::invalid_argument("gh_rule: node count must be in [1, 300]");
  }
  static std::mutex mu;
  static std::map<int, GhRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(nodes);
  if (it == cache.end()) it = cache.emplace(nodes, build_gh_rule(nodes)).first;
  return it->second;
}

double log_sum_exp(const Eigen::VectorXd& v) {
  if (v.size() == 0) return kNegInf;
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double agh_group(const Eigen::VectorXd& resid, double sigma2, ALScale lambda,
                 QuantileLevel tau, int nodes, bool* scale_fallback) {
  if (scale_fallback) *scale_fallback = false;
  if (!(sigma2 > 0.0)) throw std::invalid_argument("agh_group: sigma2 must be positive");
  if (nodes < 5) throw std::invalid_argument("agh_group: need at least 5 nodes");
  const Eigen::Index n = resid.size();
  if (n == 0) return 0.0;

  // Between consecutive order statistics of the residuals the log integrand
  // is A_k + S_k b - b^2 / (2 sigma2): exactly a scaled gaussian slice, so
  // each segment integrates in closed form and the sum is exact up to
  // round-off. Gauss-Hermite nodes cannot do this; the kinks cap them at
  // about four digits no matter the count.
  std::vector<double> r(resid.data(), resid.data() + n);
  std::sort(r.begin(), r.end());
  std::vector<double> prefix(r.size() + 1, 0.0);
  for (std::size_t k = 0; k < r.size(); ++k) prefix[k + 1] = prefix[k] + r[k];
  const double total = prefix[r.size()];
  const double sd = std::sqrt(sigma2);
  const double t = tau.tau, lam = lambda.lambda;
  const double c0 = std::log(t * (1.0 - t)) - std::log(lam);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  Eigen::VectorXd terms(n + 1);
  for (std::size_t k = 0; k <= r.size(); ++k) {
    double lo = (k == 0) ? -kInf : r[k - 1];
    double hi = (k == r.size()) ? kInf : r[k];
    if (hi <= lo) {  // duplicated residual: empty segment
      terms[static_cast<Eigen::Index>(k)] = kNegInf;
      continue;
    }
    // k residuals sit below the segment.
    double below = prefix[k], above = total - below;
    double slope = (t * (n - k) - (1.0 - t) * k) / lam;
    double icept = n * c0 - (t * above - (1.0 - t) * below) / lam;
    double center = slope * sigma2;
    terms[static_cast<Eigen::Index>(k)] =
        icept + 0.5 * slope * slope * sigma2 +
        log_phi_diff((lo - center) / sd, (hi - center) / sd);
  }
  return log_sum_exp(terms);
}

double trapezoid_group(const Eigen::VectorXd& resid, double sigma2, ALScale lambda,
                       QuantileLevel tau, int points, double half_width_sds) {
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("trapezoid_group: sigma2 must be positive");
  }
  if (points < 3) throw std::invalid_argument("trapezoid_group: need at least 3 points");
  if (resid.size() == 0) return 0.0;

  double b_star = group_mode(resid, sigma2, lambda, tau);
  double half = half_width_sds * std::sqrt(sigma2);
  double h = 2.0 * half / static_cast<double>(points - 1);
  Eigen::VectorXd terms(points);
  for (int i = 0; i < points; ++i) {
    double b = b_star - half + h * i;
    terms[i] = group_log_density(resid, b, sigma2, lambda, tau);
    if (i == 0 || i == points - 1) terms[i] -= std::log(2.0);
  }
  return std::log(h) + log_sum_exp(terms);
}

double exact_grouped_log_marginal(const GroupedDesign& design, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& offset, double sigma2,
                                  ALScale lambda, QuantileLevel tau, int nodes,
                                  bool* any_scale_fallback) {
  if (y.size() != static_cast<Eigen::Index>(design.group.size())) {
    throw std::invalid_argument("exact_grouped_log_marginal: y length mismatch");
  }
  if (offset.size() != y.size()) {
    throw std::invalid_argument("exact_grouped_log_marginal: offset length mismatch");
  }
  if (any_scale_fallback) *any_scale_fallback = false;

  std::vector<std::vector<double>> resid(static_cast<size_t>(design.levels));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    resid[static_cast<size_t>(design.group[static_cast<size_t>(i)])].push_back(
        y[i] - offset[i]);
  }

  double sum = 0.0, comp = 0.0;  // Neumaier
  for (const auto& r : resid) {
    if (r.empty()) continue;
    Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(
        r.data(), static_cast<Eigen::Index>(r.size()));
    bool fb = false;
    double term = agh_group(rv, sigma2, lambda, tau, nodes, &fb);
    if (fb && any_scale_fallback) *any_scale_fallback = true;
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

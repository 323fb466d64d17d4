#include "lgqr/dist.hpp"

#include <cmath>
#include <stdexcept>

namespace lgqr {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  }
  // Bracketed Newton on the CDF. The tail estimate sqrt(-2 log q) is a good
  // enough start that a handful of iterations reaches erfc-level accuracy,
  // and the bracket guards against the flat tails.
  double q = p < 0.5 ? p : 1.0 - p;
  double x = std::sqrt(-2.0 * std::log(q));
  if (p < 0.5) x = -x;
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 100; ++it) {
    double f = normal_cdf(x) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    double d = normal_pdf(x);
    double step = d > 0.0 ? f / d : 0.0;
    double next = x - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * (1.0 + std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

double student_t2_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("student_t2_quantile: p must lie in (0,1)");
  }
  return (2.0 * p - 1.0) * std::sqrt(1.0 / (2.0 * p * (1.0 - p)));
}

double student_t2_pdf(double x) {
  return std::pow(1.0 + 0.5 * x * x, -1.5) / (2.0 * kSqrt2);
}

}  // namespace lgqr

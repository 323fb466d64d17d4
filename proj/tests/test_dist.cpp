#include <doctest.h>

#include <cmath>

#include "lgqr/dist.hpp"

using namespace lgqr;

TEST_CASE("standard normal pdf and cdf") {
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_cdf(-1.0) + normal_cdf(1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("normal quantile inverts the cdf") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  for (int k = 1; k < 200; ++k) {
    double p = k / 200.0;
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)).epsilon(1e-11));
  }
}

TEST_CASE("student t2 closed forms") {
  CHECK(student_t2_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(student_t2_quantile(0.9) == doctest::Approx(1.8856180831641265).epsilon(1e-12));
  CHECK(student_t2_pdf(0.0) == doctest::Approx(0.35355339059327373).epsilon(1e-14));
  // F(x) = (1 + x / sqrt(2 + x^2)) / 2 for two degrees of freedom.
  for (int k = 1; k < 100; ++k) {
    double p = k / 100.0;
    double x = student_t2_quantile(p);
    double cdf = 0.5 * (1.0 + x / std::sqrt(2.0 + x * x));
    CHECK(cdf == doctest::Approx(p).epsilon(1e-12));
  }
}

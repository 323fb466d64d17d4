#pragma once

namespace lgqr {

double normal_pdf(double x);
double normal_cdf(double x);

// Inverse standard normal CDF, accurate to a few ulp of erfc.
double normal_quantile(double p);

// Student's t with 2 degrees of freedom has a closed-form quantile function.
double student_t2_quantile(double p);
double student_t2_pdf(double x);

}  // namespace lgqr

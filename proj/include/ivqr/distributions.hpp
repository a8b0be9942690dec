#pragma once

namespace ivqr::dist {

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);
double student_t_cdf(double x, double df);
double student_t_quantile(double p, double df);

}  // namespace ivqr::dist

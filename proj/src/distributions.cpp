#include "ivqr/distributions.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace ivqr::dist {

namespace {
const boost::math::normal_distribution<double> standard_normal{};
}

double normal_cdf(double x) { return boost::math::cdf(standard_normal, x); }
double normal_pdf(double x) { return boost::math::pdf(standard_normal, x); }
double normal_quantile(double p) { return boost::math::quantile(standard_normal, p); }

double student_t_cdf(double x, double df) { return boost::math::cdf(boost::math::students_t_distribution<double>(df), x); }
double student_t_quantile(double p, double df) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

}  // namespace ivqr::dist

#include "pwer/normal.hpp"

#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "math_policy.hpp"

namespace pwer::mvdist {

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p, DoublePolicy());
}

double t_cdf(double x, double df) {
  if (std::isinf(df)) return norm_cdf(x);
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double, DoublePolicy>(df), x);
}

double t_quantile(double p, double df) {
  if (std::isinf(df)) return norm_quantile(p);
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return boost::math::quantile(boost::math::students_t_distribution<double, DoublePolicy>(df), p);
}

}  // namespace pwer::mvdist

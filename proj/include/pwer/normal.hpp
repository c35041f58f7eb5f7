#pragma once

// Univariate and bivariate normal / t distribution functions.

#include <limits>

namespace pwer::mvdist {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double norm_cdf(double x);
double norm_quantile(double p);

/// Student t CDF; df may be non-integer. df == +inf gives the normal CDF.
double t_cdf(double x, double df);
double t_quantile(double p, double df);

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation r.
/// Drezner-Wesolowsky Gauss-Legendre scheme as refined by Genz; |r| <= 1.
double bvn_cdf(double h, double k, double r);

/// P(X <= h, Y <= k) for a standard bivariate t. Integer df uses the
/// Dunnett-Sobel finite series; other df integrate the normal kernel against
/// the chi scale density. df == +inf falls back to bvn_cdf.
double bvt_cdf(double h, double k, double r, double df);

/// Dunnett-Sobel series for integer df >= 1.
double bvt_cdf_integer(double h, double k, double r, int df);

/// Scale-mixture quadrature E[Phi2(h S, k S; r)], S = chi_df / sqrt(df).
double bvt_cdf_mixture(double h, double k, double r, double df);

/// P(a1 < X <= b1, a2 < Y <= b2); df == +inf for the normal case.
double bv_rectangle(double a1, double b1, double a2, double b2, double r, double df);

}  // namespace pwer::mvdist

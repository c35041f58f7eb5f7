#include <algorithm>
#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pwer/normal.hpp"

namespace pwer::mvdist {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// P(X > h, Y > k), standard bivariate normal with correlation r.
double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_cdf(-k);
  if (k == -kInf) return norm_cdf(-h);
  if (r == 0.0) return norm_cdf(-h) * norm_cdf(-k);

  static constexpr std::array<double, 3> w6 = {0.1713244923791705, 0.3607615730481384,
                                               0.4679139345726904};
  static constexpr std::array<double, 3> x6 = {0.9324695142031522, 0.6612093864662647,
                                               0.2386191860831970};
  static constexpr std::array<double, 6> w12 = {0.04717533638651177, 0.1069393259953183,
                                                0.1600783285433464,  0.2031674267230659,
                                                0.2334925365383547,  0.2491470458134029};
  static constexpr std::array<double, 6> x12 = {0.9815606342467191, 0.9041172563704750,
                                                0.7699026741943050, 0.5873179542866171,
                                                0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20 = {
      0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
      0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
      0.1491729864726037,  0.1527533871307259};
  static constexpr std::array<double, 10> x20 = {
      0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
      0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
      0.2277858511416451, 0.07652652113349733};

  const double* w;
  const double* x;
  int lg;
  if (std::abs(r) < 0.3) {
    w = w6.data(), x = x6.data(), lg = 3;
  } else if (std::abs(r) < 0.75) {
    w = w12.data(), x = x12.data(), lg = 6;
  } else {
    w = w20.data(), x = x20.data(), lg = 10;
  }

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (int i = 0; i < lg; ++i) {
      for (double node : {1.0 - x[i], 1.0 + x[i]}) {
        const double sn = std::sin(asr * node);
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / kTwoPi + norm_cdf(-h) * norm_cdf(-k), 0.0, 1.0);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = 1.0 - r * r;
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) {
      bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(kTwoPi) * norm_cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a /= 2.0;
    double sum = 0.0;
    for (int i = 0; i < lg; ++i) {
      for (double node : {1.0 - x[i], 1.0 + x[i]}) {
        const double xs = (a * node) * (a * node);
        asr = -(bs / xs + hk) / 2.0;
        if (asr > -100.0) {
          const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
          const double rs = std::sqrt(1.0 - xs);
          const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
          sum += w[i] * std::exp(asr) * (sp - ep);
        }
      }
    }
    bvn = (a * sum - bvn) / kTwoPi;
  }
  if (r > 0.0) {
    bvn += norm_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double band = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
    bvn = band - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double bvn_cdf(double h, double k, double r) { return bvn_upper(-h, -k, r); }

double bvt_cdf_integer(double h, double k, double r, int nu) {
  if (h == -kInf || k == -kInf) return 0.0;
  if (h == kInf) return k == kInf ? 1.0 : t_cdf(k, nu);
  if (k == kInf) return t_cdf(h, nu);
  constexpr double eps = 1e-15;
  if (1.0 - r < eps) return t_cdf(std::min(h, k), nu);
  if (r + 1.0 < eps) return h > -k ? t_cdf(h, nu) - t_cdf(-k, nu) : 0.0;

  const double snu = std::sqrt(static_cast<double>(nu));
  const double ors = 1.0 - r * r;
  const double hrk = h - r * k;
  const double krh = k - r * h;
  double xnhk = 0.0;
  double xnkh = 0.0;
  if (std::abs(hrk) + ors > 0.0) {
    xnhk = hrk * hrk / (hrk * hrk + ors * (nu + k * k));
    xnkh = krh * krh / (krh * krh + ors * (nu + h * h));
  }
  const double hs = sign(hrk);
  const double ks = sign(krh);
  double bvt;
  if (nu % 2 == 0) {
    bvt = std::atan2(std::sqrt(ors), -r) / kTwoPi;
    double gmph = h / std::sqrt(16.0 * (nu + h * h));
    double gmpk = k / std::sqrt(16.0 * (nu + k * k));
    double btnckh = 2.0 * std::atan2(std::sqrt(xnkh), std::sqrt(1.0 - xnkh)) / M_PI;
    double btpdkh = 2.0 * std::sqrt(xnkh * (1.0 - xnkh)) / M_PI;
    double btnchk = 2.0 * std::atan2(std::sqrt(xnhk), std::sqrt(1.0 - xnhk)) / M_PI;
    double btpdhk = 2.0 * std::sqrt(xnhk * (1.0 - xnhk)) / M_PI;
    for (int j = 1; j <= nu / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btnckh += btpdkh;
      btpdkh = 2.0 * j * btpdkh * (1.0 - xnkh) / (2.0 * j + 1.0);
      btnchk += btpdhk;
      btpdhk = 2.0 * j * btpdhk * (1.0 - xnhk) / (2.0 * j + 1.0);
      gmph = gmph * (2.0 * j - 1.0) / (2.0 * j * (1.0 + h * h / nu));
      gmpk = gmpk * (2.0 * j - 1.0) / (2.0 * j * (1.0 + k * k / nu));
    }
  } else {
    const double qhrk = std::sqrt(h * h + k * k - 2.0 * r * h * k + nu * ors);
    const double hkrn = h * k + r * nu;
    const double hkn = h * k - nu;
    const double hpk = h + k;
    bvt = std::atan2(-snu * (hkn * qhrk + hpk * hkrn), hkn * hkrn - nu * hpk * qhrk) / kTwoPi;
    if (bvt < -1e-15) bvt += 1.0;
    double gmph = h / (kTwoPi * snu * (1.0 + h * h / nu));
    double gmpk = k / (kTwoPi * snu * (1.0 + k * k / nu));
    double btnckh = std::sqrt(xnkh);
    double btpdkh = btnckh;
    double btnchk = std::sqrt(xnhk);
    double btpdhk = btnchk;
    for (int j = 1; j <= (nu - 1) / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btpdkh = (2.0 * j - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * j);
      btnckh += btpdkh;
      btpdhk = (2.0 * j - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * j);
      btnchk += btpdhk;
      gmph = gmph * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + h * h / nu));
      gmpk = gmpk * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + k * k / nu));
    }
  }
  return std::clamp(bvt, 0.0, 1.0);
}

double bvt_cdf_mixture(double h, double k, double r, double df) {
  if (h == -kInf || k == -kInf) return 0.0;
  // Density of S = sqrt(chi2_df / df), integrated over a window holding all
  // but ~1e-40 of its mass.
  const double log_norm = std::log(2.0) + 0.5 * df * std::log(0.5 * df) - std::lgamma(0.5 * df);
  auto density = [&](double s) {
    if (s <= 0.0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  auto scaled = [](double bound, double s) { return std::isinf(bound) ? bound : bound * s; };
  auto integrand = [&](double s) {
    const double f = density(s);
    return f == 0.0 ? 0.0 : f * bvn_cdf(scaled(h, s), scaled(k, s), r);
  };
  const double spread = 15.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, 1.0 - spread);
  const double hi = 1.0 + std::max(spread, 15.0 / std::sqrt(df));
  // Split at the mode so the adaptive rule sees the peak.
  const double mode = df > 1.0 ? std::sqrt((df - 1.0) / df) : lo;
  using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
  double total = 0.0;
  if (mode > lo) total += Rule::integrate(integrand, lo, mode, 15, 1e-13);
  total += Rule::integrate(integrand, std::max(lo, mode), hi, 15, 1e-13);
  return std::clamp(total, 0.0, 1.0);
}

double bvt_cdf(double h, double k, double r, double df) {
  if (std::isinf(df)) return bvn_cdf(h, k, r);
  if (df == std::floor(df) && df <= 20000.0) return bvt_cdf_integer(h, k, r, static_cast<int>(df));
  return bvt_cdf_mixture(h, k, r, df);
}

double bv_rectangle(double a1, double b1, double a2, double b2, double r, double df) {
  if (a1 >= b1 || a2 >= b2) return 0.0;
  auto f = [&](double x, double y) {
    if (x == -kInf || y == -kInf) return 0.0;
    return bvt_cdf(x, y, r, df);
  };
  const double p = f(b1, b2) - f(a1, b2) - f(b1, a2) + f(a1, a2);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace pwer::mvdist

#include "pwer/mvdist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>

#include "math_policy.hpp"

#include "pwer/error.hpp"
#include "pwer/rng.hpp"

namespace pwer::mvdist {
namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kClipTol = 1e-10;
constexpr double kJitter = 1e-12;
constexpr std::uint64_t kShiftSalt = 0x51f7;
constexpr std::uint64_t kScaleSalt = 0x5ca1e;

constexpr std::array<int, 17> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23,
                                         29, 31, 37, 41, 43, 47, 53, 59};

double frac(double x) { return x - std::floor(x); }

double baker(double x) { return 1.0 - std::abs(2.0 * x - 1.0); }

double clamp_unit(double u) { return std::clamp(u, 1e-300, 1.0 - 1e-16); }

// Lower Cholesky factor of sigma with Genz's variable reordering: at each
// step the variable with the smallest expected conditional probability on
// [a, b] goes next. Rows with vanishing conditional variance become exact
// linear functions of the earlier variables (zero diagonal).
struct Factor {
  int n = 0;
  std::vector<double> chol;  // row-major n x n
  std::vector<int> perm;     // position -> original index
};

Factor reorder_cholesky(const Eigen::MatrixXd& sigma, std::span<const double> a,
                        std::span<const double> b) {
  const int n = static_cast<int>(sigma.rows());
  Eigen::MatrixXd c = sigma;
  std::vector<double> lo(a.begin(), a.end());
  std::vector<double> hi(b.begin(), b.end());
  Factor f;
  f.n = n;
  f.chol.assign(static_cast<std::size_t>(n) * n, 0.0);
  f.perm.resize(n);
  std::iota(f.perm.begin(), f.perm.end(), 0);
  auto L = [&](int i, int j) -> double& { return f.chol[static_cast<std::size_t>(i) * n + j]; };
  std::vector<double> y(n, 0.0);

  for (int i = 0; i < n; ++i) {
    int pick = i;
    double best = kInf;
    for (int j = i; j < n; ++j) {
      double s = 0.0;
      double var = c(j, j);
      for (int k = 0; k < i; ++k) {
        s += L(j, k) * y[k];
        var -= L(j, k) * L(j, k);
      }
      double prob = 2.0;  // singular rows go last
      if (var > kJitter) {
        const double sd = std::sqrt(var);
        prob = norm_cdf((hi[j] - s) / sd) - norm_cdf((lo[j] - s) / sd);
      }
      if (prob < best) {
        best = prob;
        pick = j;
      }
    }
    if (pick != i) {
      c.row(i).swap(c.row(pick));
      c.col(i).swap(c.col(pick));
      std::swap(lo[i], lo[pick]);
      std::swap(hi[i], hi[pick]);
      std::swap(f.perm[i], f.perm[pick]);
      for (int k = 0; k < i; ++k) std::swap(L(i, k), L(pick, k));
    }
    double var = c(i, i);
    double s = 0.0;
    for (int k = 0; k < i; ++k) {
      var -= L(i, k) * L(i, k);
      s += L(i, k) * y[k];
    }
    if (var <= kJitter) {
      L(i, i) = 0.0;
      y[i] = 0.0;
      continue;
    }
    const double d = std::sqrt(var);
    L(i, i) = d;
    for (int j = i + 1; j < n; ++j) {
      double v = c(j, i);
      for (int k = 0; k < i; ++k) v -= L(j, k) * L(i, k);
      L(j, i) = v / d;
    }
    // Mean of the truncated standard normal on the standardized interval.
    const double al = (lo[i] - s) / d;
    const double be = (hi[i] - s) / d;
    const double mass = norm_cdf(be) - norm_cdf(al);
    auto pdf = [](double x) { return std::isinf(x) ? 0.0 : std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); };
    y[i] = mass > 1e-300 ? (pdf(al) - pdf(be)) / mass : (std::isinf(al) ? be : al);
  }
  return f;
}

// One evaluation of the separation-of-variables integrand. `lo`/`hi` are in
// factor order and already multiplied by the t scale; `w` holds n - 1
// uniforms.
double sov_point(const Factor& f, const double* lo, const double* hi, const double* w,
                 double* y) {
  const int n = f.n;
  double prob = 1.0;
  for (int i = 0; i < n; ++i) {
    const double* row = f.chol.data() + static_cast<std::size_t>(i) * n;
    double s = 0.0;
    for (int k = 0; k < i; ++k) s += row[k] * y[k];
    const double d = row[i];
    if (d == 0.0) {
      if (s < lo[i] || s > hi[i]) return 0.0;
      y[i] = 0.0;
      continue;
    }
    const double e0 = std::isinf(lo[i]) ? (lo[i] < 0 ? 0.0 : 1.0) : norm_cdf((lo[i] - s) / d);
    const double e1 = std::isinf(hi[i]) ? (hi[i] < 0 ? 0.0 : 1.0) : norm_cdf((hi[i] - s) / d);
    const double width = e1 - e0;
    if (width <= 0.0) return 0.0;
    prob *= width;
    if (i + 1 < n) y[i] = norm_quantile(clamp_unit(e0 + w[i] * width));
  }
  return prob;
}

// Generators for the normal coordinates start at sqrt(3); sqrt(2) is reserved
// for the t scale coordinate (see ScaleTable).
std::vector<double> richtmyer(int coords) {
  if (coords + 1 > static_cast<int>(kPrimes.size())) {
    throw ConfigError("dimension exceeds the supported maximum of " + std::to_string(kPrimes.size()));
  }
  std::vector<double> g(coords);
  for (int j = 0; j < coords; ++j) g[j] = frac(std::sqrt(static_cast<double>(kPrimes[j + 1])));
  return g;
}

std::vector<double> random_shifts(std::uint64_t seed, int shifts, int coords) {
  Rng rng = substream(seed, static_cast<std::uint64_t>(coords), kShiftSalt);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(shifts) * coords);
  for (auto& v : out) v = u(rng);
  return out;
}

std::string method_name(int shifts) {
  std::ostringstream os;
  os << "genz-sov/richtmyer-kronecker(sqrt primes)/baker/" << shifts << " random shifts";
  return os.str();
}

// Runs the randomized QMC rule until the 99% half-width meets `tol`.
// `points` carries the per-shift sample size in and out so repeated calls
// resume at the size that worked before.
ProbResult run_qmc(const Factor& f, std::span<const double> lo, std::span<const double> hi,
                   double df, const Budget& budget, ScaleTable* scales,
                   const std::vector<double>& generator, const std::vector<double>& shifts,
                   std::int64_t& points, double tol) {
  const int n = f.n;
  const bool t = !std::isinf(df);
  const int K = budget.shifts;
  const int coords = static_cast<int>(generator.size());  // n - 1 normal coordinates
  std::vector<double> sums(K, 0.0);
  std::vector<double> w(std::max(coords, 1));
  std::vector<double> y(n);
  std::vector<double> slo(n), shi(n);
  const double mult = confidence_multiplier(K);

  auto accumulate = [&](std::int64_t from, std::int64_t to) {
    for (int s = 0; s < K; ++s) {
      const double* shift = shifts.data() + static_cast<std::size_t>(s) * coords;
      double acc = 0.0;
      for (std::int64_t k = from; k <= to; ++k) {
        const double kd = static_cast<double>(k);
        for (int j = 0; j < coords; ++j) w[j] = baker(frac(kd * generator[j] + shift[j]));
        if (t) {
          const double scale = scales->at(s, k);
          for (int i = 0; i < n; ++i) {
            slo[i] = std::isinf(lo[i]) ? lo[i] : lo[i] * scale;
            shi[i] = std::isinf(hi[i]) ? hi[i] : hi[i] * scale;
          }
          acc += sov_point(f, slo.data(), shi.data(), w.data(), y.data());
        } else {
          acc += sov_point(f, lo.data(), hi.data(), w.data(), y.data());
        }
      }
      sums[s] += acc;
    }
  };

  if (points <= 0) points = budget.initial_points;
  accumulate(1, points);
  ProbResult r;
  r.method = method_name(K);
  for (;;) {
    double mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(points);
    mean /= K;
    double ss = 0.0;
    for (double v : sums) {
      const double d = v / static_cast<double>(points) - mean;
      ss += d * d;
    }
    const double se = std::sqrt(ss / (K - 1) / K);
    r.value = std::clamp(mean, 0.0, 1.0);
    r.error = mult * se;
    r.evaluations = static_cast<std::int64_t>(K) * points;
    if (r.error <= tol) return r;
    if (2 * r.evaluations > budget.max_evaluations) {
      if (budget.strict) {
        std::ostringstream os;
        os << "integration tolerance " << tol << " not reached within " << budget.max_evaluations
           << " evaluations (dimension " << n << ", error " << r.error << ")";
        throw BudgetExceeded(os.str(), r.value, r.error);
      }
      return r;
    }
    if (t) scales->reserve(2 * points);
    accumulate(points + 1, 2 * points);
    points *= 2;
  }
}

// Drops coordinates whose interval is the whole real line.
struct Reduced {
  std::vector<int> keep;
  bool empty = false;
};

Reduced reduce(std::span<const double> lower, std::span<const double> upper) {
  Reduced r;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) r.empty = true;
    if (lower[i] == -kInf && upper[i] == kInf) continue;
    r.keep.push_back(static_cast<int>(i));
  }
  return r;
}

ProbResult rectangle(std::span<const double> lower, std::span<const double> upper,
                     const CorrelationMatrix& sigma, double df, const Budget& budget) {
  if (lower.size() != upper.size() || static_cast<int>(upper.size()) != sigma.dim()) {
    throw ConfigError("bound vectors must match the matrix dimension");
  }
  if (!(df >= 1.0)) throw ConfigError("degrees of freedom must be >= 1");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw ConfigError("lower bounds must not exceed upper bounds");
    }
  }
  const Reduced red = reduce(lower, upper);
  ProbResult r;
  if (red.empty) {
    r.method = "degenerate";
    return r;
  }
  const int d = static_cast<int>(red.keep.size());
  if (d == 0) {
    r.value = 1.0;
    r.method = "full space";
    return r;
  }
  std::vector<double> lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = lower[red.keep[i]];
    hi[i] = upper[red.keep[i]];
  }
  if (d == 1) {
    r.value = std::max(0.0, t_cdf(hi[0], df) - t_cdf(lo[0], df));
    r.evaluations = 1;
    r.method = "univariate";
    return r;
  }
  const CorrelationMatrix sub = sigma.sub(red.keep);
  if (d == 2) {
    r.value = bv_rectangle(lo[0], hi[0], lo[1], hi[1], sub(0, 1), df);
    r.error = 1e-14;
    r.evaluations = 1;
    r.method = std::isinf(df) ? "bivariate normal gauss-legendre" : "bivariate t";
    return r;
  }
  const Factor f = reorder_cholesky(sub.matrix(), lo, hi);
  std::vector<double> plo(d), phi(d);
  for (int i = 0; i < d; ++i) {
    plo[i] = lo[f.perm[i]];
    phi[i] = hi[f.perm[i]];
  }
  const auto generator = richtmyer(d - 1);
  const auto shifts = random_shifts(budget.seed, budget.shifts, d - 1);
  std::unique_ptr<ScaleTable> scales;
  if (!std::isinf(df)) {
    scales = std::make_unique<ScaleTable>(df, budget.seed, budget.shifts);
    scales->reserve(budget.initial_points);
  }
  std::int64_t points = 0;
  return run_qmc(f, plo, phi, df, budget, scales.get(), generator, shifts, points, budget.abs_tol);
}

}  // namespace

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd entries) : m_(std::move(entries)) {
  const auto n = m_.rows();
  if (n < 1 || m_.cols() != n) throw ConfigError("correlation matrix must be square and nonempty");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(m_(i, i) - 1.0) > kSymmetryTol) {
      throw NumericalError("correlation matrix diagonal must be 1");
    }
    m_(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      if (!std::isfinite(m_(i, j)) || std::abs(m_(i, j) - m_(j, i)) > kSymmetryTol) {
        throw NumericalError("correlation matrix must be symmetric");
      }
      const double v = std::clamp(0.5 * (m_(i, j) + m_(j, i)), -1.0, 1.0);
      m_(i, j) = m_(j, i) = v;
    }
  }
  if (n == 1) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m_);
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest < -kClipTol) {
    std::ostringstream os;
    os << "matrix is not positive semidefinite (smallest eigenvalue " << smallest << ")";
    throw NumericalError(os.str());
  }
  if (smallest < 0.0) {
    Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd fixed = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    Eigen::VectorXd d = fixed.diagonal().cwiseSqrt().cwiseInverse();
    m_ = d.asDiagonal() * fixed * d.asDiagonal();
    m_.diagonal().setOnes();
    clipped_ = true;
  }
}

CorrelationMatrix CorrelationMatrix::identity(int dim) {
  return CorrelationMatrix(Eigen::MatrixXd::Identity(dim, dim), Trusted{});
}

CorrelationMatrix CorrelationMatrix::pair(double rho) {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, rho, rho, 1.0;
  return CorrelationMatrix(m);
}

CorrelationMatrix CorrelationMatrix::sub(std::span<const int> indices) const {
  const auto d = static_cast<Eigen::Index>(indices.size());
  Eigen::MatrixXd s(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) s(i, j) = m_(indices[i], indices[j]);
  }
  return CorrelationMatrix(std::move(s), Trusted{});
}

double confidence_multiplier(int shifts) {
  if (shifts < 2) throw ConfigError("at least two random shifts are required");
  return t_quantile(0.995, shifts - 1);
}

ScaleTable::ScaleTable(double df, std::uint64_t seed, int shifts)
    : df_(df), shift_offsets_(shifts), values_(shifts) {
  Rng rng = substream(seed, 0, kScaleSalt);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : shift_offsets_) v = u(rng);
}

std::shared_ptr<ScaleTable> ScaleTable::cached(double df, std::uint64_t seed, int shifts) {
  struct Entry {
    double df;
    std::uint64_t seed;
    int shifts;
    std::shared_ptr<ScaleTable> table;
  };
  constexpr std::size_t kCapacity = 64;
  thread_local std::vector<Entry> cache;
  for (auto it = cache.begin(); it != cache.end(); ++it) {
    if (it->df == df && it->seed == seed && it->shifts == shifts) {
      auto table = it->table;
      std::rotate(cache.begin(), it, it + 1);  // most recent first
      return table;
    }
  }
  auto table = std::make_shared<ScaleTable>(df, seed, shifts);
  cache.insert(cache.begin(), {df, seed, shifts, table});
  if (cache.size() > kCapacity) cache.pop_back();
  return table;
}

void ScaleTable::reserve(std::int64_t points) {
  const double g = std::sqrt(2.0) - 1.0;  // first Richtmyer generator
  const double half = 0.5 * df_;
  for (std::size_t s = 0; s < values_.size(); ++s) {
    auto& col = values_[s];
    const auto have = static_cast<std::int64_t>(col.size());
    if (have >= points) continue;
    col.reserve(points);
    for (std::int64_t k = have + 1; k <= points; ++k) {
      const double u = clamp_unit(baker(frac(static_cast<double>(k) * g + shift_offsets_[s])));
      col.push_back(std::sqrt(boost::math::gamma_p_inv(half, u, DoublePolicy()) / half));
    }
  }
}

double ScaleTable::at(int shift, std::int64_t k) {
  auto& col = values_[shift];
  if (static_cast<std::int64_t>(col.size()) < k) reserve(k);
  return col[k - 1];
}

ProbResult mvn_cdf(std::span<const double> upper, const CorrelationMatrix& sigma,
                   const Budget& budget) {
  std::vector<double> lower(upper.size(), -kInf);
  return rectangle(lower, upper, sigma, kInf, budget);
}

ProbResult mvn_rectangle(std::span<const double> lower, std::span<const double> upper,
                         const CorrelationMatrix& sigma, const Budget& budget) {
  return rectangle(lower, upper, sigma, kInf, budget);
}

ProbResult mvt_cdf(std::span<const double> upper, const CorrelationMatrix& sigma, double df,
                   const Budget& budget) {
  std::vector<double> lower(upper.size(), -kInf);
  return rectangle(lower, upper, sigma, df, budget);
}

ProbResult mvt_rectangle(std::span<const double> lower, std::span<const double> upper,
                         const CorrelationMatrix& sigma, double df, const Budget& budget) {
  return rectangle(lower, upper, sigma, df, budget);
}

EquicoordinateIntegrator::EquicoordinateIntegrator(CorrelationMatrix sigma, double df,
                                                   Budget budget,
                                                   std::shared_ptr<ScaleTable> scales)
    : sigma_(std::move(sigma)), df_(df), budget_(budget), scales_(std::move(scales)) {
  if (!(df_ >= 1.0)) throw ConfigError("degrees of freedom must be >= 1");
  const int n = sigma_.dim();
  if (n < 3) return;
  // Ordering fixed at a representative boundary; it affects the error only.
  const std::vector<double> lo(n, -kInf);
  const std::vector<double> hi(n, 2.0);
  const Factor f = reorder_cholesky(sigma_.matrix(), lo, hi);
  chol_ = f.chol;
  generator_ = richtmyer(n - 1);
  shifts_ = random_shifts(budget_.seed, budget_.shifts, n - 1);
  if (!std::isinf(df_) && !scales_) {
    scales_ = std::make_shared<ScaleTable>(df_, budget_.seed, budget_.shifts);
  }
  if (scales_ && scales_->df() != df_) throw ConfigError("scale table built for a different df");
}

ProbResult EquicoordinateIntegrator::cdf(double c) { return cdf(c, budget_.abs_tol); }

ProbResult EquicoordinateIntegrator::cdf(double c, double abs_tol) {
  ProbResult r;
  const int n = sigma_.dim();
  if (c == kInf) {
    r.value = 1.0;
    r.method = "full space";
    return r;
  }
  if (c == -kInf) {
    r.method = "degenerate";
    return r;
  }
  if (n == 1) {
    r.value = t_cdf(c, df_);
    r.evaluations = 1;
    r.method = "univariate";
    return r;
  }
  if (n == 2) {
    r.value = bvt_cdf(c, c, sigma_(0, 1), df_);
    r.error = 1e-14;
    r.evaluations = 1;
    r.method = std::isinf(df_) ? "bivariate normal gauss-legendre" : "bivariate t";
    return r;
  }
  return qmc(c, abs_tol);
}

ProbResult EquicoordinateIntegrator::qmc(double c, double abs_tol) {
  const int n = sigma_.dim();
  Factor f;
  f.n = n;
  f.chol = chol_;
  const std::vector<double> lo(n, -kInf);
  const std::vector<double> hi(n, c);
  if (scales_) scales_->reserve(points_ > 0 ? points_ : budget_.initial_points);
  return run_qmc(f, lo, hi, df_, budget_, scales_.get(), generator_, shifts_, points_, abs_tol);
}

}  // namespace pwer::mvdist

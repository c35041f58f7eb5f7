#pragma once

// Rectangle and equicoordinate probabilities of the multivariate normal and
// central multivariate t distributions.
//
// Dimension 1 is evaluated exactly, dimension 2 by deterministic quadrature,
// and higher dimensions by randomized quasi-Monte Carlo over the Genz
// separation-of-variables transform with a Richtmyer (square roots of primes)
// Kronecker sequence, the baker's periodizing transform and independent
// uniform random shifts. The error estimate is the 99% Student-t half-width
// across the shifts.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pwer/normal.hpp"

namespace pwer::mvdist {

/// Symmetric, unit-diagonal, positive semidefinite matrix. Eigenvalues in
/// [-1e-10, 0) are clipped to zero and the matrix rescaled to unit diagonal.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Eigen::MatrixXd entries);
  static CorrelationMatrix identity(int dim);
  /// Two-dimensional matrix with off-diagonal rho.
  static CorrelationMatrix pair(double rho);

  int dim() const { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  bool clipped() const { return clipped_; }

  CorrelationMatrix sub(std::span<const int> indices) const;

 private:
  struct Trusted {};
  CorrelationMatrix(Eigen::MatrixXd entries, Trusted) : m_(std::move(entries)) {}
  Eigen::MatrixXd m_;
  bool clipped_ = false;
};

struct Budget {
  double abs_tol = 5e-6;
  std::int64_t max_evaluations = 50'000'000;
  std::uint64_t seed = 20240229;
  int shifts = 12;
  int initial_points = 128;  // per shift
  /// When false a missed tolerance is reported through ProbResult::error
  /// instead of throwing BudgetExceeded.
  bool strict = true;
};

struct ProbResult {
  double value = 0.0;
  double error = 0.0;  // 99% half-width of the integration error
  std::int64_t evaluations = 0;
  std::string method;
};

ProbResult mvn_cdf(std::span<const double> upper, const CorrelationMatrix& sigma,
                   const Budget& budget = {});
ProbResult mvn_rectangle(std::span<const double> lower, std::span<const double> upper,
                         const CorrelationMatrix& sigma, const Budget& budget = {});
ProbResult mvt_cdf(std::span<const double> upper, const CorrelationMatrix& sigma, double df,
                   const Budget& budget = {});
ProbResult mvt_rectangle(std::span<const double> lower, std::span<const double> upper,
                         const CorrelationMatrix& sigma, double df, const Budget& budget = {});

/// Quantiles of the chi scale S = sqrt(chi2_df / df) at the Kronecker points
/// used for the scale coordinate. Shared by every integrator of one model so
/// the incomplete-gamma inversions are paid once.
class ScaleTable {
 public:
  ScaleTable(double df, std::uint64_t seed, int shifts);
  /// Table from a small per-thread cache. Entries depend only on
  /// (df, seed, shifts), so sharing never changes results.
  static std::shared_ptr<ScaleTable> cached(double df, std::uint64_t seed, int shifts);
  double df() const { return df_; }
  /// Scale for 1-based point k of `shift`; grows the table on demand.
  double at(int shift, std::int64_t k);
  void reserve(std::int64_t points);

 private:
  double df_;
  std::vector<double> shift_offsets_;
  std::vector<std::vector<double>> values_;
};

/// P(X_1 <= c, ..., X_d <= c) as a function of c for one fixed matrix and df.
/// The variable ordering, Cholesky factor and QMC points are fixed at
/// construction, so repeated calls with different c use common random numbers
/// and the estimate is a smooth function of c.
class EquicoordinateIntegrator {
 public:
  /// df == +inf selects the normal distribution. `scales` may be shared with
  /// other integrators of the same df and budget seed; it is created if null.
  EquicoordinateIntegrator(CorrelationMatrix sigma, double df, Budget budget,
                           std::shared_ptr<ScaleTable> scales = nullptr);

  ProbResult cdf(double c);
  ProbResult cdf(double c, double abs_tol);

  int dim() const { return sigma_.dim(); }
  double df() const { return df_; }

 private:
  ProbResult qmc(double c, double abs_tol);

  CorrelationMatrix sigma_;
  double df_;
  Budget budget_;
  std::shared_ptr<ScaleTable> scales_;
  std::vector<double> chol_;  // row-major lower factor after reordering
  std::vector<double> generator_;
  std::vector<double> shifts_;  // shifts_[s * coords + j]
  std::int64_t points_ = 0;
};

/// Student-t 0.995 quantile with shifts-1 degrees of freedom, the half-width
/// multiplier applied to the shift standard error.
double confidence_multiplier(int shifts);

}  // namespace pwer::mvdist

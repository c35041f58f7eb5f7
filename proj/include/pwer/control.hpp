#pragma once

// PWER and strata-wise FWER at a boundary, and critical values controlling
// the estimated PWER.

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "pwer/design.hpp"
#include "pwer/mvdist.hpp"
#include "pwer/strata.hpp"

namespace pwer::control {

struct ErrorRateReport {
  double pwer = 0.0;
  /// SWER_J for every stratum with positive weight.
  std::map<StrataIndex, double> swer;
  double max_swer = 0.0;
  double mean_swer = 0.0;
  /// Weighted sum of the per-stratum integration error bounds.
  double numerical_error = 0.0;
};

enum class BoundaryMode { Equal, PerPopulation, MinPrevalenceAdjusted };

const char* to_string(BoundaryMode mode);

struct CriticalValueResult {
  /// One entry for Equal / MinPrevalenceAdjusted, one per population for
  /// PerPopulation.
  std::vector<double> boundary;
  /// Estimated PWER at the boundary (PerPopulation: one condition per
  /// population, so the largest deviation from alpha is stored here).
  double achieved = 0.0;
  double alpha = 0.0;
  int iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double numerical_error = 0.0;
  BoundaryMode mode = BoundaryMode::Equal;
  /// MinPrevalenceAdjusted only: the boundaries from the unadjusted and the
  /// adjusted prevalences; boundary[0] is their maximum.
  std::optional<double> c_hat;
  std::optional<double> c_min;

  double c() const { return boundary.at(0); }
};

inline constexpr double kBoundaryTolerance = 1e-8;

/// Caches one equicoordinate integrator per stratum so repeated evaluations
/// at different boundaries share their QMC points. Not thread-safe; create
/// one per thread.
class PwerEvaluator {
 public:
  /// Distribution family taken from model.df; PerPopulationT requires the
  /// explicit-df constructor.
  explicit PwerEvaluator(const design::DesignModel& model, mvdist::Budget budget = {});
  PwerEvaluator(const design::DesignModel& model, double df, mvdist::Budget budget = {});

  /// SWER_J(c) = 1 - F(c, ..., c) with its integration error bound.
  mvdist::ProbResult swer(std::uint32_t mask, double c, double abs_tol);

  /// PWER over the strata with positive weight. Integration tolerance is
  /// split over the strata so the weighted error stays below budget.abs_tol.
  mvdist::ProbResult pwer(double c, const PrevalenceVector& prev);

  ErrorRateReport rates(double c, const PrevalenceVector& prev);

  double df() const { return df_; }
  int m() const { return sigma_.dim(); }
  const mvdist::Budget& budget() const { return budget_; }

 private:
  mvdist::CorrelationMatrix sigma_;
  double df_;
  mvdist::Budget budget_;
  std::shared_ptr<mvdist::ScaleTable> scales_;
  std::vector<std::unique_ptr<mvdist::EquicoordinateIntegrator>> cache_;
};

ErrorRateReport error_rates(double c, const PrevalenceVector& prev,
                            const design::DesignModel& model, const mvdist::Budget& budget = {});

/// Unique root of PWER(c) = alpha for the estimated prevalences.
CriticalValueResult solve_equal(const PrevalenceVector& prev, const design::DesignModel& model,
                                double alpha, const mvdist::Budget& budget = {});

/// Root search on an existing evaluator (keeps its cached integrators).
CriticalValueResult solve_equal(PwerEvaluator& evaluator, const PrevalenceVector& prev,
                                double alpha);

/// max(c_hat, c_min) where c_min is solved from the prevalences raised to
/// pi_min.
CriticalValueResult solve_min_adjusted(const PrevalenceVector& prev_hat,
                                       const design::DesignModel& model, double alpha,
                                       std::optional<double> pi_min = std::nullopt,
                                       const mvdist::Budget& budget = {});

/// Population-specific boundaries for the unknown heterogeneous regime: for
/// each i, the PWER condition with the plug-in correlation and df*_i.
CriticalValueResult solve_per_population(const PrevalenceVector& prev_hat,
                                         const design::DesignModel& model, double alpha,
                                         const mvdist::Budget& budget = {});

}  // namespace pwer::control

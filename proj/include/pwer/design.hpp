#pragma once

// Joint null distribution of the population test statistics: variances of the
// mean differences, correlation matrix, degrees of freedom and noncentrality.

#include <span>
#include <variant>
#include <vector>

#include "pwer/error.hpp"
#include "pwer/mvdist.hpp"
#include "pwer/strata.hpp"

namespace pwer::design {

/// Population i has no patients on its treatment arm or on control, so its
/// statistic is undefined.
class UndefinedStatistic : public DegenerateError {
 public:
  UndefinedStatistic(int population, const std::string& what)
      : DegenerateError(what), population(population) {}
  int population;  // 0-based
};

/// Dense (stratum, arm) table of doubles, laid out like CountTable cells.
class CellGrid {
 public:
  CellGrid() = default;
  CellGrid(int m, int arms, double fill = 0.0);

  int m() const { return m_; }
  int arms() const { return arms_; }
  double& at(std::uint32_t mask, Arm arm) { return v_[index(mask, arm)]; }
  double at(std::uint32_t mask, Arm arm) const { return v_[index(mask, arm)]; }
  double& operator()(const StrataIndex& j, Arm arm) { return at(j.mask(), arm); }
  double operator()(const StrataIndex& j, Arm arm) const { return at(j.mask(), arm); }

 private:
  std::size_t index(std::uint32_t mask, Arm arm) const {
    return (mask - 1) * static_cast<std::size_t>(arms_) + static_cast<std::size_t>(arm);
  }
  int m_ = 0;
  int arms_ = 0;
  std::vector<double> v_;
};

struct KnownHeterogeneous {
  CellGrid variances;  // sigma^2_{J,T}
};

struct KnownHomogeneous {
  double variance = 1.0;
};

/// Common unknown variance estimated by pooling; df = N - s.
struct UnknownHomogeneous {
  double pooled_variance = 1.0;
  int contributing_cells = 0;  // s
  double df = 0.0;
};

/// Cell-wise variance estimates. Joint distribution of the studentized
/// statistics is only approximated (plug-in correlation, Satterthwaite df).
struct UnknownHeterogeneous {
  CellGrid variances;                        // estimated sigma^2_{J,T}
  std::vector<double> treatment_variance;    // per population, arm T_i pooled across its strata
  std::vector<double> control_variance;      // per population, control pooled across its strata
};

using VarianceRegime =
    std::variant<KnownHeterogeneous, KnownHomogeneous, UnknownHomogeneous, UnknownHeterogeneous>;

struct Gaussian {};
struct PooledT {
  double df;
};
struct PerPopulationT {
  std::vector<double> df;
};
using DfModel = std::variant<Gaussian, PooledT, PerPopulationT>;

/// Degrees of freedom for a single multivariate distribution; +inf for the
/// Gaussian. Throws for PerPopulationT, which has no common df.
double common_df(const DfModel& model);

struct DesignModel {
  int m = 0;
  CountTable counts;
  VarianceRegime regime;
  TreatmentStructure structure;
  std::vector<double> variance;  // V_i, variance of the estimated mean difference
  std::vector<double> h;         // H_i = 1/n_{i,T_i} + 1/n_{i,C}
  mvdist::CorrelationMatrix sigma;
  DfModel df;
  std::vector<double> nu;        // noncentrality, zero under the global null
  bool approximate = false;      // true for UnknownHeterogeneous
};

/// Builds the null model from allocated counts. Throws UndefinedStatistic if
/// some population lacks treatment or control patients.
DesignModel build_model(const CountTable& counts, const VarianceRegime& regime);

/// Regime with df = N - s derived from the counts alone (s = cells with more
/// than one patient); the variance value does not enter the null distribution.
UnknownHomogeneous unknown_homogeneous_from_counts(const CountTable& counts,
                                                   double pooled_variance = 1.0);

struct CellSummary {
  Count n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance, 0 when n < 2
};

CellSummary summarize_cell(std::span<const double> responses);

struct PooledVariance {
  double variance;
  int contributing_cells;  // s
  double df;               // N - s
};

/// Pooled estimator sum (n - 1) s^2 / (N - s); cells with n <= 1 add their
/// patients to N but contribute no variance term.
PooledVariance pooled_variance(std::span<const CellSummary> cells);

/// Welch-Satterthwaite degrees of freedom for a two-sample mean difference.
double satterthwaite_df(double var_t, Count n_t, double var_c, Count n_c);

/// Summaries for every (stratum, arm) cell.
class SummaryGrid {
 public:
  SummaryGrid(int m, int arms) : m_(m), arms_(arms), v_(strata_count(m) * arms) {}
  CellSummary& at(std::uint32_t mask, Arm arm) { return v_[(mask - 1) * arms_ + arm]; }
  const CellSummary& at(std::uint32_t mask, Arm arm) const { return v_[(mask - 1) * arms_ + arm]; }
  std::span<const CellSummary> all() const { return v_; }
  int m() const { return m_; }
  int arms() const { return arms_; }

 private:
  int m_;
  int arms_;
  std::vector<CellSummary> v_;
};

/// Plug-in regime from observed cell data. Cells with a single patient borrow
/// the pooled variance of their arm across strata.
UnknownHeterogeneous estimate_heterogeneous(const CountTable& counts, const SummaryGrid& data);

/// Test statistics for observed data: Z_i for known variances, T_i with the
/// pooled variance for UnknownHomogeneous, T*_i for UnknownHeterogeneous.
std::vector<double> statistics(const DesignModel& model, const SummaryGrid& data);

/// Location of the statistics for per-cell means mu_{J,T}. Cells with
/// patients must have finite means.
std::vector<double> noncentrality(const DesignModel& model, const CellGrid& means);

/// Variance of one cell under the regime (true or estimated).
double cell_variance(const VarianceRegime& regime, std::uint32_t mask, Arm arm);

}  // namespace pwer::design

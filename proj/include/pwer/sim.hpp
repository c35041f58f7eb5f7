#pragma once

// Scenario engine: draws biomarker models and counts, estimates prevalences,
// solves boundaries from the estimates and evaluates the true error rates.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pwer/control.hpp"
#include "pwer/design.hpp"
#include "pwer/mvdist.hpp"
#include "pwer/strata.hpp"

namespace pwer::sim {

struct FixedProbs {
  std::vector<double> p;
};

/// p_i drawn independently from U(lo, hi) in every replicate.
struct UniformRandomPerRep {
  double lo = 0.0;
  double hi = 1.0;
};

/// Strata probabilities from U(lo, hi) biomarkers, then the stratum `mask`
/// is pinned at `value` and the others rescaled to 1 - value.
struct OnePrevalencePinned {
  double value = 0.5;
  std::uint32_t mask = 1;
  double lo = 0.0;
  double hi = 1.0;
};

using BiomarkerMode = std::variant<FixedProbs, UniformRandomPerRep, OnePrevalencePinned>;

/// Dependence between biomarkers; a GaussianCopula with UniformRandomPerRep
/// gives correlated random biomarkers.
using Dependence = std::variant<IndependentBiomarkers, GaussianCopula>;

enum class VarianceKind { KnownHomogeneous, UnknownHomogeneous, KnownHeterogeneous, UnknownHeterogeneous };

struct VarianceSettings {
  VarianceKind kind = VarianceKind::UnknownHomogeneous;
  double variance = 1.0;  // homogeneous regimes
  /// Heterogeneous regimes: cell variances drawn from U(lo, hi) per replicate.
  double lo = 0.5;
  double hi = 2.0;
};

struct Mle {};
struct Marginal {};
struct MleWithMinPrevalence {
  std::optional<double> pi_min;
};
using Estimator = std::variant<Mle, Marginal, MleWithMinPrevalence>;

/// Integration budget for scenario runs. Looser than the library default:
/// an error of 2e-5 on the PWER is far below the spread across replicates.
inline mvdist::Budget default_scenario_budget() {
  mvdist::Budget b;
  b.abs_tol = 2e-5;
  return b;
}

struct ScenarioSpec {
  int m = 3;
  Count N = 500;
  int replicates = 10'000;
  double alpha = 0.025;
  BiomarkerMode biomarkers = UniformRandomPerRep{};
  Dependence dependence = IndependentBiomarkers{};
  VarianceSettings variance;
  TreatmentStructure structure = TreatmentStructure::AllDifferent;
  AllocationPolicy allocation = AllocationPolicy::Stratified;
  Estimator estimator = Mle{};
  /// Per-cell means mu_{J,T}; empty means the global null.
  std::optional<design::CellGrid> effects;
  std::uint64_t seed = 1;
  int threads = 1;  // 0: hardware concurrency
  /// Simulated datasets per replicate where the true PWER is estimated by
  /// simulation (unknown heterogeneous variances, non-null effects).
  int data_replicates = 10'000;
  mvdist::Budget budget = default_scenario_budget();

  void validate() const;
};

struct RepRecord {
  std::uint64_t replicate = 0;
  double true_pwer = 0.0;
  double max_swer = 0.0;
  double mean_swer = 0.0;
  std::vector<double> boundary;
  std::uint64_t counts_digest = 0;
  bool had_empty_stratum = false;
  /// Monte Carlo standard error of true_pwer; 0 when evaluated analytically.
  double mc_error = 0.0;
};

struct ScenarioResult {
  std::vector<RepRecord> records;
  /// Excluded replicates by reason.
  std::map<std::string, int> failures;
  int attempted = 0;
};

ScenarioResult run_scenario(const ScenarioSpec& spec);

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

enum class Metric { TruePwer, MaxSwer, MeanSwer };

const char* to_string(Metric metric);

/// Quantiles interpolate linearly between order statistics at (k-1)/(n-1);
/// SD uses divisor n - 1 (0 for a single value).
SummaryStats summarize(std::span<const double> values);
SummaryStats summarize(std::span<const RepRecord> records, Metric metric);

/// Responses summarized per cell: cell mean ~ N(mu, sigma^2 / n) and
/// (n - 1) s^2 / sigma^2 ~ chi^2_{n-1}, the exact law of the sufficient
/// statistics of normal responses.
design::SummaryGrid simulate_cells(const CountTable& counts, const design::CellGrid& variances,
                                   const design::CellGrid* means, Rng& rng);

struct McEstimate {
  double pwer = 0.0;
  double se = 0.0;
  /// Rejection frequency of at least one H_j, j in J, per stratum with
  /// positive weight (mask order).
  std::map<StrataIndex, double> swer;
  double max_swer = 0.0;
  double mean_swer = 0.0;
  int replicates = 0;
};

/// Weighted share of simulated datasets rejecting some hypothesis of each
/// stratum. `boundaries` holds one value (common) or one per population;
/// `true_variances` are the data-generating cell variances; `means` may be
/// null for the global null.
McEstimate mc_true_pwer(const design::DesignModel& model, std::span<const double> boundaries,
                        const PrevalenceVector& true_prev, const design::CellGrid& true_variances,
                        const design::CellGrid* means, int reps, Rng& rng);

struct LfcDesign {
  std::uint64_t replicate = 0;
  double boundary = 0.0;
  double pwer_theta = 0.0;
  double pwer_zero = 0.0;
  double diff = 0.0;
  double se_diff = 0.0;
  bool violation = false;
};

struct LfcReport {
  std::vector<LfcDesign> designs;
  std::map<std::string, int> failures;
  bool any_violation = false;
};

/// Empirical PWER with effects (all treatment-minus-control differences
/// <= 0) against the global null on the same designs and common random
/// numbers. A design is flagged when the difference exceeds 3 SE.
LfcReport lfc_check(const ScenarioSpec& with_effects, const ScenarioSpec& null_spec);

struct EmptyStratumRecord {
  std::uint64_t replicate = 0;
  double c_hat = 0.0;
  double c_min = 0.0;
  control::ErrorRateReport unadjusted;
  control::ErrorRateReport adjusted;
};

struct EmptyStratumStudy {
  std::vector<EmptyStratumRecord> records;
  std::map<std::string, int> failures;
  int attempted = 0;
  int skipped_without_empty_stratum = 0;
};

/// Replicates with at least one unobserved stratum: true error rates under
/// the MLE boundary c_hat and under c_min from the pi_min-adjusted
/// prevalences. Biomarker probabilities must stay below 0.1.
EmptyStratumStudy empty_stratum_study(const ScenarioSpec& spec, std::optional<double> pi_min);

enum class StudyMetric { TruePwer, MaxSwer, MeanSwer };
SummaryStats summarize(std::span<const EmptyStratumRecord> records, StudyMetric metric,
                       bool adjusted);

/// FNV-1a over the stratum and cell counts.
std::uint64_t counts_digest(const CountTable& counts);

}  // namespace pwer::sim

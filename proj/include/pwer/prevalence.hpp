#pragma once

// Estimators of the stratum prevalences from observed counts.

#include <optional>
#include <vector>

#include "pwer/strata.hpp"

namespace pwer::prevalence {

/// Multinomial maximum likelihood estimate n_J / N.
PrevalenceVector mle(const CountTable& counts);

enum class MarginalDenominator {
  EmptyStratumShare,  // 1 - tau_empty, the observed share of biomarker-positive patients
  ModelImplied,       // 1 - prod_k (1 - p_k), the independence-model share
};

struct MarginalEstimate {
  PrevalenceVector prevalence;
  /// Estimated marginal biomarker frequencies p_j over all screened patients.
  std::vector<double> marginal_frequencies;
  /// Sum of the unnormalized weights minus one. Zero when the observed
  /// counts follow the independence model exactly.
  double residual = 0.0;
};

/// Independence-model estimator built from the marginal biomarker
/// frequencies, using the screened patients without any biomarker
/// (counts.empty_stratum_count). Renormalized to sum to one.
MarginalEstimate marginal(const CountTable& counts,
                          MarginalDenominator denominator = MarginalDenominator::EmptyStratumShare);

/// 1 / (2^(m+1) - 2): half the weight each stratum would carry under an
/// equal split.
double default_pi_min(int m);

struct AdjustedPrevalence {
  PrevalenceVector prevalence;
  /// Strata raised to pi_min.
  std::vector<StrataIndex> raised;
  /// Strata outside the raised set that fell below pi_min after rescaling;
  /// left as they are (single pass).
  std::vector<StrataIndex> below_after_rescale;
};

/// Single pass: every stratum with weight below pi_min is set to pi_min and
/// the remaining strata are rescaled proportionally so the total stays one.
/// pi_min == 0 leaves the vector unchanged.
AdjustedPrevalence min_prevalence_adjust(const PrevalenceVector& prev,
                                         std::optional<double> pi_min = std::nullopt);

}  // namespace pwer::prevalence

#pragma once

// Partition of m overlapping populations into the 2^m - 1 disjoint strata,
// stratum prevalences from biomarker models, multinomial sampling of stratum
// counts and allocation of patients to treatment arms.

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pwer/rng.hpp"

namespace pwer {

namespace mvdist {
struct Budget;
}

inline constexpr int kMaxPopulations = 16;

using Count = std::int64_t;

/// Nonempty subset J of the populations {1..m}, stored as a bit mask where
/// bit k stands for population k+1. Ordered by mask value.
class StrataIndex {
 public:
  StrataIndex(std::uint32_t mask, int m);

  /// Build from 1-based population numbers, e.g. {1, 3}.
  static StrataIndex of(std::initializer_list<int> members, int m);

  std::uint32_t mask() const { return mask_; }
  int m() const { return m_; }
  int size() const;
  /// `population` is 0-based.
  bool contains(int population) const { return (mask_ >> population) & 1u; }
  /// 0-based population indices in ascending order.
  std::vector<int> members() const;
  /// Position in enumerate_strata(m), i.e. mask - 1.
  std::size_t ordinal() const { return mask_ - 1; }
  std::string to_string() const;  // "{1,2}"

  friend bool operator==(const StrataIndex&, const StrataIndex&) = default;
  friend std::strong_ordering operator<=>(const StrataIndex& a, const StrataIndex& b) {
    return a.mask_ <=> b.mask_;
  }

 private:
  std::uint32_t mask_;
  int m_;
};

/// Number of nonempty strata, 2^m - 1.
std::size_t strata_count(int m);

/// All 2^m - 1 nonempty subsets in ascending mask order.
std::vector<StrataIndex> enumerate_strata(int m);

/// Weights over all nonempty strata (explicit zeros kept), summing to one.
class PrevalenceVector {
 public:
  /// `weights[k]` belongs to the stratum with mask k + 1.
  PrevalenceVector(int m, std::vector<double> weights);

  /// Rescales nonnegative raw weights to sum to one.
  static PrevalenceVector normalized(int m, std::vector<double> raw);

  int m() const { return m_; }
  std::size_t size() const { return w_.size(); }
  double operator[](const StrataIndex& j) const { return w_[j.ordinal()]; }
  double at_mask(std::uint32_t mask) const { return w_[mask - 1]; }
  std::span<const double> weights() const { return w_; }

  /// Marginal population prevalence pi_i = sum of pi_J over J containing i.
  double population_share(int population) const;

 private:
  int m_;
  std::vector<double> w_;
};

struct IndependentBiomarkers {};

/// Dichotomized Gaussian: biomarker i is expressed iff latent_i <= Phi^-1(p_i).
struct GaussianCopula {
  Eigen::MatrixXd correlation;
};

struct BiomarkerModel {
  std::vector<double> p;
  std::variant<IndependentBiomarkers, GaussianCopula> dependence = IndependentBiomarkers{};

  int m() const { return static_cast<int>(p.size()); }
  void validate() const;
};

/// Prevalence of every stratum among patients expressing at least one
/// biomarker.
PrevalenceVector strata_probabilities(const BiomarkerModel& model);
PrevalenceVector strata_probabilities(const BiomarkerModel& model, const mvdist::Budget& budget);

enum class TreatmentStructure {
  AllDifferent,     // population i receives its own treatment T_i
  SingleTreatment,  // one treatment T tested in every population
};

/// Arm 0 is the shared control C. Under AllDifferent arm k (k >= 1) is the
/// treatment of population k; under SingleTreatment arm 1 is the common T.
using Arm = int;
inline constexpr Arm kControl = 0;

/// Patients per stratum and per stratum/arm cell.
class CountTable {
 public:
  CountTable(int m, TreatmentStructure structure);
  CountTable(int m, TreatmentStructure structure, std::vector<Count> per_stratum);

  int m() const { return m_; }
  TreatmentStructure structure() const { return structure_; }
  int arm_count() const;
  /// Arm holding the treatment tested in `population` (0-based).
  Arm treatment_arm(int population) const;
  bool eligible(const StrataIndex& j, Arm arm) const;
  /// Eligible arms in allocation order: control first, then treatments.
  std::vector<Arm> eligible_arms(const StrataIndex& j) const;

  Count n(const StrataIndex& j) const { return per_stratum_[j.ordinal()]; }
  Count n(const StrataIndex& j, Arm arm) const { return cells_[cell(j.ordinal(), arm)]; }
  Count n_mask(std::uint32_t mask) const { return per_stratum_[mask - 1]; }
  Count cell_mask(std::uint32_t mask, Arm arm) const { return cells_[cell(mask - 1, arm)]; }
  Count total() const;

  /// n_{i,T}: patients on `arm` summed over all strata containing `population`.
  Count population_arm(int population, Arm arm) const;
  Count population_size(int population) const;

  void set_stratum(const StrataIndex& j, Count n);
  /// Sets a cell and marks the table as allocated.
  void set_cell(const StrataIndex& j, Arm arm, Count n);
  bool allocated() const { return allocated_; }

  /// Patients screened without any biomarker; only the marginal estimator uses it.
  Count empty_stratum_count = 0;

  /// Throws ConfigError when cell counts disagree with stratum counts or
  /// ineligible cells are populated.
  void validate() const;

  std::span<const Count> per_stratum() const { return per_stratum_; }

 private:
  std::size_t cell(std::size_t ordinal, Arm arm) const {
    return ordinal * static_cast<std::size_t>(arm_count()) + static_cast<std::size_t>(arm);
  }

  int m_;
  TreatmentStructure structure_;
  std::vector<Count> per_stratum_;
  std::vector<Count> cells_;
  bool allocated_ = false;
};

/// Multinomial(N, prev) draw of the stratum counts.
CountTable sample_counts(const PrevalenceVector& prev, Count total, TreatmentStructure structure,
                         Rng& rng);

enum class AllocationPolicy {
  Stratified,        // equal split within each stratum, remainder rotating from C
  RandomArrival,     // each patient uniformly over the eligible arms
  PragmaticArrival,  // smallest eligible subtrial first, 1:1 within the subtrial
};

CountTable allocate(const CountTable& counts, AllocationPolicy policy, Rng& rng);

}  // namespace pwer

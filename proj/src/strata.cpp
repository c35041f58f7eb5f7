#include "pwer/strata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pwer/error.hpp"
#include "pwer/mvdist.hpp"

namespace pwer {
namespace {

void check_m(int m) {
  if (m < 1 || m > kMaxPopulations) {
    throw ConfigError("population count must be in [1, " + std::to_string(kMaxPopulations) +
                      "], got " + std::to_string(m));
  }
}

constexpr double kSumTol = 1e-12;

}  // namespace

StrataIndex::StrataIndex(std::uint32_t mask, int m) : mask_(mask), m_(m) {
  check_m(m);
  if (mask == 0 || mask >= (1u << m)) {
    throw ConfigError("stratum mask " + std::to_string(mask) + " invalid for m = " +
                      std::to_string(m));
  }
}

StrataIndex StrataIndex::of(std::initializer_list<int> members, int m) {
  std::uint32_t mask = 0;
  for (int k : members) {
    if (k < 1 || k > m) throw ConfigError("population index out of range");
    mask |= 1u << (k - 1);
  }
  return StrataIndex(mask, m);
}

int StrataIndex::size() const { return std::popcount(mask_); }

std::vector<int> StrataIndex::members() const {
  std::vector<int> out;
  for (int k = 0; k < m_; ++k) {
    if (contains(k)) out.push_back(k);
  }
  return out;
}

std::string StrataIndex::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int k : members()) {
    if (!first) os << ',';
    os << k + 1;
    first = false;
  }
  os << '}';
  return os.str();
}

std::size_t strata_count(int m) {
  check_m(m);
  return (std::size_t{1} << m) - 1;
}

std::vector<StrataIndex> enumerate_strata(int m) {
  const std::size_t n = strata_count(m);
  std::vector<StrataIndex> out;
  out.reserve(n);
  for (std::uint32_t mask = 1; mask <= n; ++mask) out.emplace_back(mask, m);
  return out;
}

PrevalenceVector::PrevalenceVector(int m, std::vector<double> weights)
    : m_(m), w_(std::move(weights)) {
  if (w_.size() != strata_count(m)) {
    throw ConfigError("prevalence vector needs " + std::to_string(strata_count(m)) +
                      " weights, got " + std::to_string(w_.size()));
  }
  double sum = 0.0;
  for (double v : w_) {
    if (!(v >= 0.0) || v > 1.0 + kSumTol) throw ConfigError("prevalence weights must lie in [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "prevalence weights must sum to 1, got " << sum;
    throw ConfigError(os.str());
  }
}

PrevalenceVector PrevalenceVector::normalized(int m, std::vector<double> raw) {
  double sum = 0.0;
  for (double v : raw) {
    if (!(v >= 0.0)) throw ConfigError("prevalence weights must be nonnegative");
    sum += v;
  }
  if (!(sum > 0.0)) throw DegenerateError("prevalence weights have no mass");
  for (double& v : raw) v /= sum;
  return PrevalenceVector(m, std::move(raw));
}

double PrevalenceVector::population_share(int population) const {
  double s = 0.0;
  for (std::uint32_t mask = 1; mask <= w_.size(); ++mask) {
    if ((mask >> population) & 1u) s += w_[mask - 1];
  }
  return s;
}

void BiomarkerModel::validate() const {
  check_m(m());
  bool any = false;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("biomarker probabilities must lie in [0, 1]");
    any = any || v > 0.0;
  }
  if (!any) throw DegenerateError("at least one biomarker probability must be positive");
  if (const auto* cop = std::get_if<GaussianCopula>(&dependence)) {
    if (cop->correlation.rows() != m() || cop->correlation.cols() != m()) {
      throw ConfigError("copula correlation must be m x m");
    }
    mvdist::CorrelationMatrix check(cop->correlation);
    (void)check;
  }
}

PrevalenceVector strata_probabilities(const BiomarkerModel& model) {
  return strata_probabilities(model, mvdist::Budget{});
}

PrevalenceVector strata_probabilities(const BiomarkerModel& model, const mvdist::Budget& budget) {
  model.validate();
  const int m = model.m();
  const std::size_t n = strata_count(m);
  std::vector<double> cells(n);

  if (std::holds_alternative<IndependentBiomarkers>(model.dependence)) {
    for (std::uint32_t mask = 1; mask <= n; ++mask) {
      double prob = 1.0;
      for (int k = 0; k < m; ++k) prob *= ((mask >> k) & 1u) ? model.p[k] : 1.0 - model.p[k];
      cells[mask - 1] = prob;
    }
  } else {
    const mvdist::CorrelationMatrix r(std::get<GaussianCopula>(model.dependence).correlation);
    std::vector<double> threshold(m);
    for (int k = 0; k < m; ++k) threshold[k] = mvdist::norm_quantile(model.p[k]);
    std::vector<double> lo(m), hi(m);
    for (std::uint32_t mask = 1; mask <= n; ++mask) {
      for (int k = 0; k < m; ++k) {
        if ((mask >> k) & 1u) {
          lo[k] = -mvdist::kInf;
          hi[k] = threshold[k];
        } else {
          lo[k] = threshold[k];
          hi[k] = mvdist::kInf;
        }
      }
      cells[mask - 1] = mvdist::mvn_rectangle(lo, hi, r, budget).value;
    }
  }
  const double mass = std::accumulate(cells.begin(), cells.end(), 0.0);
  if (!(mass > 1e-12)) {
    throw DegenerateError("probability of expressing any biomarker is numerically zero");
  }
  for (double& v : cells) v /= mass;
  return PrevalenceVector(m, std::move(cells));
}

CountTable::CountTable(int m, TreatmentStructure structure)
    : m_(m), structure_(structure), per_stratum_(strata_count(m), 0) {
  cells_.assign(per_stratum_.size() * static_cast<std::size_t>(arm_count()), 0);
}

CountTable::CountTable(int m, TreatmentStructure structure, std::vector<Count> per_stratum)
    : CountTable(m, structure) {
  if (per_stratum.size() != per_stratum_.size()) {
    throw ConfigError("count table needs " + std::to_string(per_stratum_.size()) + " strata");
  }
  for (Count v : per_stratum) {
    if (v < 0) throw ConfigError("stratum counts must be nonnegative");
  }
  per_stratum_ = std::move(per_stratum);
}

int CountTable::arm_count() const {
  return structure_ == TreatmentStructure::AllDifferent ? m_ + 1 : 2;
}

Arm CountTable::treatment_arm(int population) const {
  return structure_ == TreatmentStructure::AllDifferent ? population + 1 : 1;
}

bool CountTable::eligible(const StrataIndex& j, Arm arm) const {
  if (arm == kControl) return true;
  if (structure_ == TreatmentStructure::SingleTreatment) return arm == 1;
  return arm >= 1 && arm <= m_ && j.contains(arm - 1);
}

std::vector<Arm> CountTable::eligible_arms(const StrataIndex& j) const {
  std::vector<Arm> out{kControl};
  if (structure_ == TreatmentStructure::SingleTreatment) {
    out.push_back(1);
  } else {
    for (int k : j.members()) out.push_back(k + 1);
  }
  return out;
}

Count CountTable::total() const {
  return std::accumulate(per_stratum_.begin(), per_stratum_.end(), Count{0});
}

Count CountTable::population_arm(int population, Arm arm) const {
  Count s = 0;
  for (std::uint32_t mask = 1; mask <= per_stratum_.size(); ++mask) {
    if ((mask >> population) & 1u) s += cells_[cell(mask - 1, arm)];
  }
  return s;
}

Count CountTable::population_size(int population) const {
  Count s = 0;
  for (std::uint32_t mask = 1; mask <= per_stratum_.size(); ++mask) {
    if ((mask >> population) & 1u) s += per_stratum_[mask - 1];
  }
  return s;
}

void CountTable::set_stratum(const StrataIndex& j, Count n) {
  if (n < 0) throw ConfigError("stratum counts must be nonnegative");
  per_stratum_[j.ordinal()] = n;
}

void CountTable::set_cell(const StrataIndex& j, Arm arm, Count n) {
  if (n < 0) throw ConfigError("cell counts must be nonnegative");
  if (arm < 0 || arm >= arm_count()) throw ConfigError("arm index out of range");
  if (n > 0 && !eligible(j, arm)) {
    throw ConfigError("arm " + std::to_string(arm) + " is not eligible in stratum " + j.to_string());
  }
  cells_[cell(j.ordinal(), arm)] = n;
  allocated_ = true;
}

void CountTable::validate() const {
  if (empty_stratum_count < 0) throw ConfigError("empty-stratum count must be nonnegative");
  if (!allocated_) return;
  for (const auto& j : enumerate_strata(m_)) {
    Count s = 0;
    for (Arm a = 0; a < arm_count(); ++a) {
      const Count v = n(j, a);
      if (v > 0 && !eligible(j, a)) {
        throw ConfigError("ineligible arm populated in stratum " + j.to_string());
      }
      s += v;
    }
    if (s != n(j)) {
      throw ConfigError("cell counts of stratum " + j.to_string() + " sum to " + std::to_string(s) +
                        " but the stratum holds " + std::to_string(n(j)));
    }
  }
}

CountTable sample_counts(const PrevalenceVector& prev, Count total, TreatmentStructure structure,
                         Rng& rng) {
  if (total < 0) throw ConfigError("sample size must be nonnegative");
  const auto w = prev.weights();
  std::vector<Count> counts(w.size(), 0);
  Count left = total;
  double mass_left = 1.0;
  for (std::size_t k = 0; k < w.size() && left > 0; ++k) {
    if (k + 1 == w.size() || mass_left <= 0.0) {
      counts[k] = left;
      left = 0;
      break;
    }
    const double p = std::clamp(w[k] / mass_left, 0.0, 1.0);
    std::binomial_distribution<Count> draw(left, p);
    counts[k] = draw(rng);
    left -= counts[k];
    mass_left -= w[k];
  }
  return CountTable(prev.m(), structure, std::move(counts));
}

namespace {

void allocate_stratified(CountTable& out) {
  for (const auto& j : enumerate_strata(out.m())) {
    const auto arms = out.eligible_arms(j);
    const Count k = static_cast<Count>(arms.size());
    const Count base = out.n(j) / k;
    const Count rem = out.n(j) % k;
    for (std::size_t i = 0; i < arms.size(); ++i) {
      out.set_cell(j, arms[i], base + (static_cast<Count>(i) < rem ? 1 : 0));
    }
  }
}

void allocate_random(CountTable& out, Rng& rng) {
  for (const auto& j : enumerate_strata(out.m())) {
    const auto arms = out.eligible_arms(j);
    std::vector<Count> tally(arms.size(), 0);
    std::uniform_int_distribution<std::size_t> pick(0, arms.size() - 1);
    for (Count p = 0; p < out.n(j); ++p) ++tally[pick(rng)];
    for (std::size_t i = 0; i < arms.size(); ++i) out.set_cell(j, arms[i], tally[i]);
  }
}

// Patients arrive in random order. Each joins the eligible subtrial (one per
// population in the stratum) with the fewest patients so far, ties broken at
// random, and is randomized 1:1 between the subtrial's treatment and the
// shared control by keeping the two sides balanced.
void allocate_pragmatic(CountTable& out, Rng& rng) {
  const int m = out.m();
  std::vector<std::uint32_t> arrivals;
  arrivals.reserve(static_cast<std::size_t>(out.total()));
  for (std::uint32_t mask = 1; mask <= out.per_stratum().size(); ++mask) {
    arrivals.insert(arrivals.end(), static_cast<std::size_t>(out.n_mask(mask)), mask);
  }
  std::shuffle(arrivals.begin(), arrivals.end(), rng);

  std::vector<Count> subtrial_t(m, 0), subtrial_c(m, 0);
  std::vector<Count> cells(out.per_stratum().size() * static_cast<std::size_t>(out.arm_count()), 0);
  std::vector<int> ties;
  for (std::uint32_t mask : arrivals) {
    Count fewest = -1;
    ties.clear();
    for (int k = 0; k < m; ++k) {
      if (!((mask >> k) & 1u)) continue;
      const Count size = subtrial_t[k] + subtrial_c[k];
      if (fewest < 0 || size < fewest) {
        fewest = size;
        ties.assign(1, k);
      } else if (size == fewest) {
        ties.push_back(k);
      }
    }
    const int sub = ties.size() == 1
                        ? ties[0]
                        : ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
    bool to_treatment;
    if (subtrial_t[sub] != subtrial_c[sub]) {
      to_treatment = subtrial_t[sub] < subtrial_c[sub];
    } else {
      to_treatment = std::bernoulli_distribution(0.5)(rng);
    }
    const Arm arm = to_treatment ? out.treatment_arm(sub) : kControl;
    (to_treatment ? subtrial_t : subtrial_c)[sub] += 1;
    cells[(mask - 1) * static_cast<std::size_t>(out.arm_count()) + static_cast<std::size_t>(arm)] += 1;
  }
  for (const auto& j : enumerate_strata(m)) {
    for (Arm a = 0; a < out.arm_count(); ++a) {
      out.set_cell(j, a, cells[j.ordinal() * static_cast<std::size_t>(out.arm_count()) + a]);
    }
  }
}

}  // namespace

CountTable allocate(const CountTable& counts, AllocationPolicy policy, Rng& rng) {
  CountTable out(counts.m(), counts.structure(),
                 std::vector<Count>(counts.per_stratum().begin(), counts.per_stratum().end()));
  out.empty_stratum_count = counts.empty_stratum_count;
  switch (policy) {
    case AllocationPolicy::Stratified:
      allocate_stratified(out);
      break;
    case AllocationPolicy::RandomArrival:
      allocate_random(out, rng);
      break;
    case AllocationPolicy::PragmaticArrival:
      allocate_pragmatic(out, rng);
      break;
  }
  out.validate();
  return out;
}

}  // namespace pwer

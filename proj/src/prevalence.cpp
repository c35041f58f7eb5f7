#include "pwer/prevalence.hpp"

#include <cmath>
#include <sstream>

#include "pwer/error.hpp"

namespace pwer::prevalence {

PrevalenceVector mle(const CountTable& counts) {
  const Count total = counts.total();
  if (total < 1) throw DegenerateError("prevalence estimation needs at least one patient");
  std::vector<double> w(counts.per_stratum().size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = static_cast<double>(counts.per_stratum()[k]) / static_cast<double>(total);
  }
  return PrevalenceVector::normalized(counts.m(), std::move(w));
}

MarginalEstimate marginal(const CountTable& counts, MarginalDenominator denominator) {
  counts.validate();
  const int m = counts.m();
  const Count positives = counts.total();
  const double screened = static_cast<double>(positives + counts.empty_stratum_count);
  if (positives < 1) throw DegenerateError("all screened patients are biomarker-free");

  std::vector<double> p(m, 0.0);
  for (std::uint32_t mask = 1; mask <= counts.per_stratum().size(); ++mask) {
    const double tau = static_cast<double>(counts.n_mask(mask)) / screened;
    for (int k = 0; k < m; ++k) {
      if ((mask >> k) & 1u) p[k] += tau;
    }
  }
  double denom;
  if (denominator == MarginalDenominator::EmptyStratumShare) {
    denom = 1.0 - static_cast<double>(counts.empty_stratum_count) / screened;
  } else {
    double none = 1.0;
    for (double v : p) none *= 1.0 - v;
    denom = 1.0 - none;
  }
  if (!(denom > 0.0)) throw DegenerateError("marginal estimator denominator is zero");

  std::vector<double> w(counts.per_stratum().size());
  double sum = 0.0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    double prod = 1.0;
    for (int k = 0; k < m; ++k) prod *= ((mask >> k) & 1u) ? p[k] : 1.0 - p[k];
    w[mask - 1] = prod / denom;
    sum += w[mask - 1];
  }
  MarginalEstimate out{PrevalenceVector::normalized(m, std::move(w)), std::move(p), sum - 1.0};
  return out;
}

double default_pi_min(int m) {
  return 1.0 / (std::ldexp(1.0, m + 1) - 2.0);
}

AdjustedPrevalence min_prevalence_adjust(const PrevalenceVector& prev,
                                         std::optional<double> pi_min) {
  const int m = prev.m();
  const double floor = pi_min.value_or(default_pi_min(m));
  const double cap = 1.0 / static_cast<double>(strata_count(m));
  if (!(floor >= 0.0) || floor >= cap) {
    std::ostringstream os;
    os << "pi_min must lie in [0, " << cap << "), got " << floor;
    throw ConfigError(os.str());
  }
  const auto w = prev.weights();
  std::vector<StrataIndex> raised;
  double kept_mass = 0.0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    if (w[mask - 1] < floor) {
      raised.emplace_back(mask, m);
    } else {
      kept_mass += w[mask - 1];
    }
  }
  if (raised.empty()) return {prev, {}, {}};

  const double floor_mass = static_cast<double>(raised.size()) * floor;
  if (floor_mass >= 1.0 || !(kept_mass > 0.0)) {
    throw ConfigError("infeasible adjustment: too many strata below pi_min");
  }
  const double scale = (1.0 - floor_mass) / kept_mass;
  std::vector<double> out(w.size());
  std::vector<StrataIndex> below;
  std::size_t r = 0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    if (r < raised.size() && raised[r].mask() == mask) {
      out[mask - 1] = floor;
      ++r;
      continue;
    }
    out[mask - 1] = w[mask - 1] * scale;
    if (out[mask - 1] < floor) below.emplace_back(mask, m);
  }
  return {PrevalenceVector::normalized(m, std::move(out)), std::move(raised), std::move(below)};
}

}  // namespace pwer::prevalence

#include "pwer/control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include <boost/math/tools/toms748_solve.hpp>

#include "pwer/error.hpp"
#include "pwer/prevalence.hpp"

namespace pwer::control {
namespace {

constexpr int kMaxIterations = 200;
constexpr double kUpperLimit = 40.0;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5)) {
    std::ostringstream os;
    os << "alpha must lie in (0, 0.5], got " << alpha;
    throw ConfigError(os.str());
  }
}

void check_prevalence(const PrevalenceVector& prev, int m) {
  if (prev.m() != m) {
    throw ConfigError("prevalence vector covers " + std::to_string(prev.m()) +
                      " populations, model has " + std::to_string(m));
  }
}

}  // namespace

const char* to_string(BoundaryMode mode) {
  switch (mode) {
    case BoundaryMode::Equal:
      return "equal";
    case BoundaryMode::PerPopulation:
      return "per-population";
    case BoundaryMode::MinPrevalenceAdjusted:
      return "min-prevalence-adjusted";
  }
  return "?";
}

PwerEvaluator::PwerEvaluator(const design::DesignModel& model, mvdist::Budget budget)
    : PwerEvaluator(model, design::common_df(model.df), budget) {}

PwerEvaluator::PwerEvaluator(const design::DesignModel& model, double df, mvdist::Budget budget)
    : sigma_(model.sigma), df_(df), budget_(budget), cache_(strata_count(model.m)) {
  if (!(df_ >= 1.0)) throw ConfigError("degrees of freedom must be >= 1");
  if (!std::isinf(df_)) {
    scales_ = mvdist::ScaleTable::cached(df_, budget_.seed, budget_.shifts);
  }
}

mvdist::ProbResult PwerEvaluator::swer(std::uint32_t mask, double c, double abs_tol) {
  auto& slot = cache_.at(mask - 1);
  if (!slot) {
    const auto members = StrataIndex(mask, m()).members();
    slot = std::make_unique<mvdist::EquicoordinateIntegrator>(sigma_.sub(members), df_, budget_,
                                                              scales_);
  }
  auto r = slot->cdf(c, abs_tol);
  r.value = std::clamp(1.0 - r.value, 0.0, 1.0);
  return r;
}

mvdist::ProbResult PwerEvaluator::pwer(double c, const PrevalenceVector& prev) {
  check_prevalence(prev, m());
  const auto w = prev.weights();
  int integrated = 0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    if (w[mask - 1] > 0.0 && std::popcount(mask) >= 3) ++integrated;
  }
  mvdist::ProbResult out;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    const double pi = w[mask - 1];
    if (pi <= 0.0) continue;
    const double tol =
        integrated > 0 ? std::min(1e-2, budget_.abs_tol / (integrated * pi)) : budget_.abs_tol;
    const auto r = swer(mask, c, tol);
    out.value += pi * r.value;
    out.error += pi * r.error;
    out.evaluations += r.evaluations;
  }
  out.value = std::clamp(out.value, 0.0, 1.0);
  out.method = "weighted strata";
  return out;
}

ErrorRateReport PwerEvaluator::rates(double c, const PrevalenceVector& prev) {
  check_prevalence(prev, m());
  const auto w = prev.weights();
  int integrated = 0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    if (w[mask - 1] > 0.0 && std::popcount(mask) >= 3) ++integrated;
  }
  ErrorRateReport rep;
  double sum = 0.0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    const double pi = w[mask - 1];
    if (pi <= 0.0) continue;
    const double tol =
        integrated > 0 ? std::min(1e-2, budget_.abs_tol / (integrated * pi)) : budget_.abs_tol;
    const auto r = swer(mask, c, tol);
    rep.swer.emplace(StrataIndex(mask, m()), r.value);
    rep.pwer += pi * r.value;
    rep.numerical_error += pi * r.error;
    rep.max_swer = std::max(rep.max_swer, r.value);
    sum += r.value;
  }
  rep.pwer = std::clamp(rep.pwer, 0.0, 1.0);
  rep.mean_swer = rep.swer.empty() ? 0.0 : sum / static_cast<double>(rep.swer.size());
  return rep;
}

ErrorRateReport error_rates(double c, const PrevalenceVector& prev,
                            const design::DesignModel& model, const mvdist::Budget& budget) {
  PwerEvaluator ev(model, budget);
  return ev.rates(c, prev);
}

CriticalValueResult solve_equal(PwerEvaluator& ev, const PrevalenceVector& prev, double alpha) {
  check_alpha(alpha);
  check_prevalence(prev, ev.m());

  // Every stratum's SWER lies between the single-test rate and the Boole
  // bound |J| (1 - F(c)), which brackets the root.
  double weighted_size = 0.0;
  const auto w = prev.weights();
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    weighted_size += w[mask - 1] * std::popcount(mask);
  }
  const double df = ev.df();
  double lo = std::max(0.0, mvdist::t_quantile(1.0 - alpha, df));
  double hi = mvdist::t_quantile(1.0 - alpha / std::max(1.0, weighted_size), df);

  CriticalValueResult res;
  res.alpha = alpha;
  res.mode = BoundaryMode::Equal;

  double err = 0.0;
  auto f = [&](double c) {
    const auto r = ev.pwer(c, prev);
    err = r.error;
    ++res.iterations;
    return r.value - alpha;
  };

  const double flo = f(lo);
  if (flo <= 0.0) {
    res.boundary = {lo};
    res.achieved = flo + alpha;
    res.bracket_lo = res.bracket_hi = lo;
    res.numerical_error = err;
    return res;
  }
  double fhi = f(hi);
  while (fhi > 0.0) {
    lo = hi;
    hi += 0.5;
    if (hi > kUpperLimit) {
      std::ostringstream os;
      os << "critical value not bracketed: PWER(" << lo << ") - alpha = " << fhi
         << " (integration error " << err << ")";
      throw NumericalError(os.str());
    }
    fhi = f(hi);
  }
  if (fhi == 0.0) {
    res.boundary = {hi};
    res.achieved = alpha;
    res.bracket_lo = res.bracket_hi = hi;
    res.numerical_error = err;
    return res;
  }

  boost::uintmax_t iters = kMaxIterations;
  const auto tol = [](double a, double b) { return std::abs(b - a) <= kBoundaryTolerance; };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  if (iters >= kMaxIterations) throw NumericalError("critical value search did not converge");
  const double c = 0.5 * (a + b);
  const auto at = ev.pwer(c, prev);
  res.boundary = {c};
  res.achieved = at.value;
  res.numerical_error = at.error;
  res.bracket_lo = a;
  res.bracket_hi = b;
  return res;
}

CriticalValueResult solve_equal(const PrevalenceVector& prev, const design::DesignModel& model,
                                double alpha, const mvdist::Budget& budget) {
  PwerEvaluator ev(model, budget);
  return solve_equal(ev, prev, alpha);
}

CriticalValueResult solve_min_adjusted(const PrevalenceVector& prev_hat,
                                       const design::DesignModel& model, double alpha,
                                       std::optional<double> pi_min,
                                       const mvdist::Budget& budget) {
  PwerEvaluator ev(model, budget);
  auto res = solve_equal(ev, prev_hat, alpha);
  res.mode = BoundaryMode::MinPrevalenceAdjusted;
  res.c_hat = res.c();
  const auto adjusted = prevalence::min_prevalence_adjust(prev_hat, pi_min);
  if (adjusted.raised.empty()) {
    res.c_min = res.c();
    return res;
  }
  auto alt = solve_equal(ev, adjusted.prevalence, alpha);
  res.c_min = alt.c();
  res.iterations += alt.iterations;
  if (alt.c() > res.c()) {
    // Report the estimated PWER at the larger boundary.
    const auto at = ev.pwer(alt.c(), prev_hat);
    res.boundary = alt.boundary;
    res.achieved = at.value;
    res.numerical_error = at.error;
    res.bracket_lo = alt.bracket_lo;
    res.bracket_hi = alt.bracket_hi;
  }
  return res;
}

CriticalValueResult solve_per_population(const PrevalenceVector& prev_hat,
                                         const design::DesignModel& model, double alpha,
                                         const mvdist::Budget& budget) {
  const auto* per = std::get_if<design::PerPopulationT>(&model.df);
  if (!per) throw ConfigError("per-population boundaries need the unknown heterogeneous regime");
  CriticalValueResult res;
  res.alpha = alpha;
  res.mode = BoundaryMode::PerPopulation;
  res.bracket_lo = kUpperLimit;
  double worst = -1.0;
  for (int i = 0; i < model.m; ++i) {
    PwerEvaluator ev(model, per->df.at(i), budget);
    const auto r = solve_equal(ev, prev_hat, alpha);
    res.boundary.push_back(r.c());
    res.iterations += r.iterations;
    res.numerical_error = std::max(res.numerical_error, r.numerical_error);
    res.bracket_lo = std::min(res.bracket_lo, r.bracket_lo);
    res.bracket_hi = std::max(res.bracket_hi, r.bracket_hi);
    if (std::abs(r.achieved - alpha) > worst) {
      worst = std::abs(r.achieved - alpha);
      res.achieved = r.achieved;
    }
  }
  return res;
}

}  // namespace pwer::control

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pwer/control.hpp"
#include "pwer/error.hpp"
#include "pwer/prevalence.hpp"

using namespace pwer;
using namespace pwer::control;

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double phi_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

template <class F>
double simpson(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// P(max of d equicorrelated standard normals > c), rho >= 0.
double equicorrelated_exceed(int d, double rho, double c) {
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  return 1.0 - simpson(
                   [&](double z) { return phi_pdf(z) * std::pow(phi_cdf((c - a * z) / b), d); },
                   -12.0, 12.0, 4000);
}

template <class F>
double bisect_decreasing(F f, double target, double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

design::DesignModel stratified_model(int m, std::vector<Count> per, const design::VarianceRegime& regime,
                                     TreatmentStructure structure = TreatmentStructure::AllDifferent) {
  CountTable t(m, structure, std::move(per));
  Rng rng = substream(1, 1);
  return design::build_model(allocate(t, AllocationPolicy::Stratified, rng), regime);
}

design::DesignModel with_sigma(design::DesignModel model, double rho) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(model.m, model.m, rho);
  s.diagonal().setOnes();
  model.sigma = mvdist::CorrelationMatrix(s);
  return model;
}

const double z975 = 1.959963984540054;

}  // namespace

// ---------------------------------------------------------------------------
// Exact special cases
// ---------------------------------------------------------------------------

TEST(SolveEqual, SinglePopulationIsNormalQuantile) {
  const auto model = stratified_model(1, {100}, design::KnownHomogeneous{1.0});
  const auto r = solve_equal(PrevalenceVector(1, {1.0}), model, 0.025);
  EXPECT_NEAR(r.c(), z975, 1e-6);
  EXPECT_NEAR(r.achieved, 0.025, 1e-9);
  EXPECT_EQ(r.mode, BoundaryMode::Equal);
}

TEST(SolveEqual, DisjointStrataNeedNoMultiplicityAdjustment) {
  const auto model = stratified_model(2, {50, 70, 0}, design::KnownHomogeneous{1.0});
  const auto r = solve_equal(PrevalenceVector(2, {0.4, 0.6, 0.0}), model, 0.025);
  EXPECT_NEAR(r.c(), z975, 1e-6);
}

TEST(SolveEqual, PerfectCorrelationBehavesLikeOneTest) {
  const auto base = stratified_model(2, {30, 30, 30}, design::KnownHomogeneous{1.0});
  const auto model = with_sigma(base, 1.0);
  const auto r = solve_equal(PrevalenceVector(2, {0.0, 0.0, 1.0}), model, 0.025);
  EXPECT_NEAR(r.c(), z975, 1e-6);
}

TEST(SolveEqual, PooledTUsesStudentQuantile) {
  const auto t = stratified_model(1, {12}, design::KnownHomogeneous{1.0});
  CountTable counts(1, TreatmentStructure::AllDifferent, {12});
  Rng rng = substream(1, 1);
  const auto alloc = allocate(counts, AllocationPolicy::Stratified, rng);
  const auto model = design::build_model(alloc, design::unknown_homogeneous_from_counts(alloc));
  const auto r = solve_equal(PrevalenceVector(1, {1.0}), model, 0.025);
  EXPECT_NEAR(r.c(), mvdist::t_quantile(0.975, 10.0), 1e-6);
  EXPECT_GT(r.c(), solve_equal(PrevalenceVector(1, {1.0}), t, 0.025).c());
}

// ---------------------------------------------------------------------------
// Against independent quadrature
// ---------------------------------------------------------------------------

TEST(SolveEqual, BivariateAgainstQuadrature) {
  const auto model = with_sigma(stratified_model(2, {30, 30, 30}, design::KnownHomogeneous{1.0}), 0.5);
  const double want = bisect_decreasing(
      [](double c) { return equicorrelated_exceed(2, 0.5, c); }, 0.025, 1.0, 4.0);
  const auto r = solve_equal(PrevalenceVector(2, {0.0, 0.0, 1.0}), model, 0.025);
  EXPECT_NEAR(r.c(), want, 1e-7);
}

TEST(SolveEqual, MixtureAgainstQuadrature) {
  const double rho = 0.3;
  const auto model =
      with_sigma(stratified_model(3, {10, 10, 10, 10, 10, 10, 10}, design::KnownHomogeneous{1.0}), rho);
  std::vector<double> w(7, 0.0);
  w[0] = 0.3;   // {1}
  w[2] = 0.25;  // {1,2}
  w[6] = 0.45;  // {1,2,3}
  const PrevalenceVector prev(3, w);
  auto oracle = [&](double c) {
    return 0.3 * equicorrelated_exceed(1, rho, c) + 0.25 * equicorrelated_exceed(2, rho, c) +
           0.45 * equicorrelated_exceed(3, rho, c);
  };
  const double want = bisect_decreasing(oracle, 0.025, 1.0, 4.0);
  const auto r = solve_equal(prev, model, 0.025);
  // PWER error 5e-6 over a slope near 0.07 moves c by under 1e-4
  EXPECT_NEAR(r.c(), want, 1e-4);
  EXPECT_NEAR(oracle(r.c()), 0.025, 1e-5);
}

TEST(ErrorRates, MatchQuadratureStratumByStratum) {
  const double rho = 0.6;
  const auto model =
      with_sigma(stratified_model(4, std::vector<Count>(15, 10), design::KnownHomogeneous{1.0}), rho);
  const PrevalenceVector prev = PrevalenceVector::normalized(4, std::vector<double>(15, 1.0));
  const auto rep = error_rates(2.3, prev, model);
  EXPECT_EQ(rep.swer.size(), 15u);
  double pwer = 0.0;
  for (const auto& [j, v] : rep.swer) {
    EXPECT_NEAR(v, equicorrelated_exceed(j.size(), rho, 2.3), 2e-5) << j.to_string();
    pwer += v / 15.0;
  }
  EXPECT_NEAR(rep.pwer, pwer, 1e-15);
  EXPECT_NEAR(rep.mean_swer, pwer, 1e-15);
  EXPECT_NEAR(rep.max_swer, equicorrelated_exceed(4, rho, 2.3), 2e-5);
  EXPECT_LE(rep.numerical_error, mvdist::Budget{}.abs_tol);
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

TEST(Properties, PwerDecreasesInBoundary) {
  const auto model =
      stratified_model(3, {40, 25, 18, 30, 12, 9, 20}, design::KnownHomogeneous{1.0});
  const PrevalenceVector prev = PrevalenceVector::normalized(3, {40, 25, 18, 30, 12, 9, 20});
  PwerEvaluator ev(model);
  double last = 1.0;
  for (double c = 1.5; c <= 3.0; c += 0.1) {
    const double v = ev.pwer(c, prev).value;
    EXPECT_LT(v, last) << c;
    last = v;
  }
}

TEST(Properties, BoundaryAntitoneInAlphaAndInsideBooleBracket) {
  const auto model =
      stratified_model(3, {40, 25, 18, 30, 12, 9, 20}, design::KnownHomogeneous{1.0});
  const PrevalenceVector prev = PrevalenceVector::normalized(3, {40, 25, 18, 30, 12, 9, 20});
  double weighted = 0.0;
  for (std::uint32_t mask = 1; mask <= 7; ++mask) {
    weighted += prev.at_mask(mask) * StrataIndex(mask, 3).size();
  }
  double last = 10.0;
  for (double alpha : {0.005, 0.01, 0.025, 0.05, 0.1}) {
    const auto r = solve_equal(prev, model, alpha);
    EXPECT_LT(r.c(), last);
    last = r.c();
    EXPECT_GE(r.c(), mvdist::norm_quantile(1 - alpha) - 1e-8);
    EXPECT_LE(r.c(), mvdist::norm_quantile(1 - alpha / weighted) + 1e-8);
    EXPECT_NEAR(r.achieved, alpha, 2e-5);
    EXPECT_LE(r.bracket_hi - r.bracket_lo, 1e-6);
  }
}

TEST(Properties, RejectsBadInputs) {
  const auto model = stratified_model(2, {10, 10, 10}, design::KnownHomogeneous{1.0});
  EXPECT_THROW(solve_equal(PrevalenceVector(2, {0.5, 0.5, 0.0}), model, 0.0), ConfigError);
  EXPECT_THROW(solve_equal(PrevalenceVector(2, {0.5, 0.5, 0.0}), model, 0.7), ConfigError);
  EXPECT_THROW(solve_equal(PrevalenceVector(1, {1.0}), model, 0.025), ConfigError);
}

// ---------------------------------------------------------------------------
// Minimum-prevalence adjustment
// ---------------------------------------------------------------------------

TEST(MinAdjusted, RaisesBoundaryWhenIntersectionUnobserved) {
  const auto model = with_sigma(stratified_model(2, {30, 30, 30}, design::KnownHomogeneous{1.0}), 0.5);
  const PrevalenceVector prev(2, {0.6, 0.4, 0.0});
  const auto r = solve_min_adjusted(prev, model, 0.025);
  EXPECT_EQ(r.mode, BoundaryMode::MinPrevalenceAdjusted);
  ASSERT_TRUE(r.c_hat && r.c_min);
  EXPECT_NEAR(*r.c_hat, z975, 1e-6);
  EXPECT_GT(*r.c_min, *r.c_hat);
  EXPECT_EQ(r.c(), *r.c_min);
  // the adjusted prevalences put 1/6 on {1,2}
  const double want = bisect_decreasing(
      [](double c) {
        return 5.0 / 6 * equicorrelated_exceed(1, 0.5, c) + 1.0 / 6 * equicorrelated_exceed(2, 0.5, c);
      },
      0.025, 1.0, 4.0);
  EXPECT_NEAR(*r.c_min, want, 1e-7);
  // estimated PWER at the larger boundary is below alpha
  EXPECT_LT(r.achieved, 0.025);
}

TEST(MinAdjusted, ZeroFloorKeepsUnadjustedBoundary) {
  const auto model = with_sigma(stratified_model(2, {30, 30, 30}, design::KnownHomogeneous{1.0}), 0.5);
  const PrevalenceVector prev(2, {0.6, 0.4, 0.0});
  const auto r = solve_min_adjusted(prev, model, 0.025, 0.0);
  EXPECT_EQ(*r.c_min, *r.c_hat);
  EXPECT_EQ(r.c(), solve_equal(prev, model, 0.025).c());
}

TEST(MinAdjusted, NeverBelowUnadjusted) {
  const auto model =
      stratified_model(3, {40, 25, 18, 30, 12, 9, 20}, design::KnownHomogeneous{1.0});
  for (const auto& w : {std::vector<double>{0.5, 0.2, 0.0, 0.3, 0.0, 0.0, 0.0},
                        std::vector<double>{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.4},
                        std::vector<double>{0.9, 0.02, 0.0, 0.02, 0.02, 0.02, 0.02}}) {
    const PrevalenceVector prev(3, w);
    const auto r = solve_min_adjusted(prev, model, 0.025);
    EXPECT_GE(r.c(), *r.c_hat);
    EXPECT_EQ(r.c(), std::max(*r.c_hat, *r.c_min));
  }
}

// ---------------------------------------------------------------------------
// Per-population boundaries
// ---------------------------------------------------------------------------

TEST(PerPopulation, SymmetricDesignGivesEqualBoundaries) {
  CountTable t(2, TreatmentStructure::AllDifferent, {20, 20, 21});
  Rng rng = substream(1, 1);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  design::UnknownHeterogeneous het{design::CellGrid(2, 3, 1.0), {1.0, 1.0}, {1.0, 1.0}};
  const auto model = design::build_model(alloc, het);
  const PrevalenceVector prev(2, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto r = solve_per_population(prev, model, 0.025);
  ASSERT_EQ(r.boundary.size(), 2u);
  EXPECT_NEAR(r.boundary[0], r.boundary[1], 1e-9);
  EXPECT_EQ(r.mode, BoundaryMode::PerPopulation);
  // each condition is the equal-boundary problem at that population's df
  const auto& df = std::get<design::PerPopulationT>(model.df).df;
  PwerEvaluator ev(model, df[0]);
  EXPECT_NEAR(ev.pwer(r.boundary[0], prev).value, 0.025, 1e-5);
}

TEST(PerPopulation, SmallerDfGivesLargerBoundary) {
  CountTable t(2, TreatmentStructure::AllDifferent, {8, 60, 10});
  Rng rng = substream(1, 1);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  design::UnknownHeterogeneous het{design::CellGrid(2, 3, 1.0), {1.0, 1.0}, {1.0, 1.0}};
  const auto model = design::build_model(alloc, het);
  const auto& df = std::get<design::PerPopulationT>(model.df).df;
  ASSERT_LT(df[0], df[1]);
  const auto r = solve_per_population(PrevalenceVector::normalized(2, {8, 60, 10}), model, 0.025);
  EXPECT_GT(r.boundary[0], r.boundary[1]);
}

TEST(PerPopulation, LargeSamplesApproachGaussianBoundary) {
  CountTable t(2, TreatmentStructure::AllDifferent, {4000, 4000, 4000});
  Rng rng = substream(1, 1);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  design::UnknownHeterogeneous het{design::CellGrid(2, 3, 1.0), {1.0, 1.0}, {1.0, 1.0}};
  const auto model = design::build_model(alloc, het);
  const PrevalenceVector prev(2, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto r = solve_per_population(prev, model, 0.025);
  const auto gauss = solve_equal(prev, design::build_model(alloc, design::KnownHomogeneous{1.0}), 0.025);
  EXPECT_NEAR(r.boundary[0], gauss.c(), 2e-3);
}

TEST(PerPopulation, RequiresHeterogeneousRegime) {
  const auto model = stratified_model(2, {10, 10, 10}, design::KnownHomogeneous{1.0});
  EXPECT_THROW(solve_per_population(PrevalenceVector(2, {0.3, 0.3, 0.4}), model, 0.025), ConfigError);
}

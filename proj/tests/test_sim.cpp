#include <gtest/gtest.h>

#include <cmath>

#include "pwer/error.hpp"
#include "pwer/sim.hpp"

using namespace pwer;
using namespace pwer::sim;

namespace {

ScenarioSpec small_spec() {
  ScenarioSpec s;
  s.m = 3;
  s.N = 200;
  s.replicates = 12;
  s.variance.kind = VarianceKind::KnownHomogeneous;
  s.seed = 42;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

TEST(Summarize, TypeSevenQuantiles) {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
  const auto s = summarize(v);
  EXPECT_EQ(s.n, 5u);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.sd, std::sqrt(2.5));
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.q1, 2.0);
  EXPECT_DOUBLE_EQ(s.median, 3.0);
  EXPECT_DOUBLE_EQ(s.q3, 4.0);
  EXPECT_DOUBLE_EQ(s.max, 5.0);

  const std::vector<double> w{1.0, 2.0, 3.0, 4.0};
  const auto t = summarize(w);
  EXPECT_DOUBLE_EQ(t.q1, 1.75);
  EXPECT_DOUBLE_EQ(t.median, 2.5);
  EXPECT_DOUBLE_EQ(t.q3, 3.25);
}

TEST(Summarize, SingleValueHasZeroSd) {
  const std::vector<double> v{0.025};
  const auto s = summarize(v);
  EXPECT_EQ(s.sd, 0.0);
  EXPECT_EQ(s.q1, 0.025);
  EXPECT_EQ(s.q3, 0.025);
  EXPECT_THROW(summarize(std::vector<double>{}), DegenerateError);
}

// ---------------------------------------------------------------------------
// Scenario runs
// ---------------------------------------------------------------------------

TEST(RunScenario, DeterministicAcrossThreadCounts) {
  auto spec = small_spec();
  const auto one = run_scenario(spec);
  spec.threads = 3;
  const auto three = run_scenario(spec);
  ASSERT_EQ(one.records.size(), three.records.size());
  for (std::size_t k = 0; k < one.records.size(); ++k) {
    EXPECT_EQ(one.records[k].replicate, three.records[k].replicate);
    EXPECT_EQ(one.records[k].true_pwer, three.records[k].true_pwer);
    EXPECT_EQ(one.records[k].boundary, three.records[k].boundary);
    EXPECT_EQ(one.records[k].counts_digest, three.records[k].counts_digest);
  }
  EXPECT_EQ(one.failures, three.failures);
}

TEST(RunScenario, ReplicateDependsOnlyOnSeedAndIndex) {
  auto spec = small_spec();
  const auto all = run_scenario(spec);
  spec.replicates = 3;
  const auto prefix = run_scenario(spec);
  for (const auto& r : prefix.records) {
    for (const auto& q : all.records) {
      if (q.replicate == r.replicate) EXPECT_EQ(q.true_pwer, r.true_pwer);
    }
  }
}

TEST(RunScenario, SinglePopulationControlsExactly) {
  auto spec = small_spec();
  spec.m = 1;
  spec.biomarkers = FixedProbs{{0.4}};
  const auto res = run_scenario(spec);
  ASSERT_FALSE(res.records.empty());
  for (const auto& r : res.records) {
    EXPECT_NEAR(r.true_pwer, 0.025, 1e-9);
    EXPECT_NEAR(r.boundary[0], 1.959963984540054, 1e-6);
  }
}

TEST(RunScenario, TruePwerNearAlphaAndSwerAbovePwer) {
  auto spec = small_spec();
  spec.replicates = 20;
  const auto res = run_scenario(spec);
  EXPECT_EQ(res.attempted, 20);
  for (const auto& r : res.records) {
    EXPECT_NEAR(r.true_pwer, 0.025, 0.01);
    EXPECT_GE(r.max_swer, r.true_pwer - 1e-4);
    EXPECT_GE(r.max_swer, r.mean_swer);
    EXPECT_EQ(r.mc_error, 0.0);
  }
}

TEST(RunScenario, TinyTrialsRecordFailures) {
  auto spec = small_spec();
  spec.N = 6;
  spec.replicates = 30;
  const auto res = run_scenario(spec);
  int failed = 0;
  for (const auto& [reason, n] : res.failures) failed += n;
  EXPECT_GT(failed, 0);
  EXPECT_EQ(failed + static_cast<int>(res.records.size()), 30);
}

TEST(RunScenario, SingleReplicateSummaries) {
  auto spec = small_spec();
  spec.replicates = 1;
  spec.biomarkers = FixedProbs{{0.3, 0.4, 0.5}};
  const auto res = run_scenario(spec);
  ASSERT_EQ(res.records.size(), 1u);
  const auto s = summarize(res.records, Metric::TruePwer);
  EXPECT_EQ(s.sd, 0.0);
  EXPECT_EQ(s.median, res.records[0].true_pwer);
}

TEST(RunScenario, RejectsInvalidSpecs) {
  auto spec = small_spec();
  spec.alpha = 0.0;
  EXPECT_THROW(run_scenario(spec), ConfigError);
  spec = small_spec();
  spec.biomarkers = FixedProbs{{0.3}};
  EXPECT_THROW(run_scenario(spec), ConfigError);
  spec = small_spec();
  spec.variance.kind = VarianceKind::UnknownHeterogeneous;
  spec.estimator = MleWithMinPrevalence{};
  EXPECT_THROW(run_scenario(spec), ConfigError);
}

// ---------------------------------------------------------------------------
// Data simulation
// ---------------------------------------------------------------------------

TEST(SimulateCells, MomentsMatchTheModel) {
  CountTable t(1, TreatmentStructure::AllDifferent, {20});
  Rng rng = substream(1, 1);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  design::CellGrid var(1, 2, 4.0);
  double sum = 0.0, sumsq = 0.0, svar = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto g = simulate_cells(alloc, var, nullptr, rng);
    const double x = g.at(1, 1).mean;
    sum += x;
    sumsq += x * x;
    svar += g.at(1, 1).variance;
  }
  const double mean = sum / reps;
  EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(0.4 / reps));
  EXPECT_NEAR(sumsq / reps - mean * mean, 0.4, 0.03);
  // E s^2 = sigma^2, Var s^2 = 2 sigma^4 / (n - 1)
  EXPECT_NEAR(svar / reps, 4.0, 4.0 * std::sqrt(32.0 / 9 / reps));
}

TEST(McTruePwer, AgreesWithAnalyticRates) {
  CountTable t(2, TreatmentStructure::AllDifferent, {30, 30, 30});
  Rng rng = substream(3, 3);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  const auto model = design::build_model(alloc, design::KnownHomogeneous{1.0});
  const PrevalenceVector prev(2, {0.3, 0.3, 0.4});
  const auto exact = control::error_rates(2.0, prev, model);
  const std::vector<double> c{2.0};
  const design::CellGrid var(2, 3, 1.0);
  const auto mc = mc_true_pwer(model, c, prev, var, nullptr, 40000, rng);
  EXPECT_NEAR(mc.pwer, exact.pwer, 3.5 * mc.se);
  EXPECT_NEAR(mc.swer.at(StrataIndex(3, 2)), exact.swer.at(StrataIndex(3, 2)), 0.004);
}

TEST(McTruePwer, PerPopulationBoundaries) {
  CountTable t(2, TreatmentStructure::AllDifferent, {40, 40, 0});
  Rng rng = substream(4, 4);
  const auto alloc = allocate(t, AllocationPolicy::Stratified, rng);
  const auto model = design::build_model(alloc, design::KnownHomogeneous{1.0});
  const PrevalenceVector prev(2, {0.5, 0.5, 0.0});
  const std::vector<double> c{1.6448536269514722, 10.0};
  const auto mc = mc_true_pwer(model, c, prev, design::CellGrid(2, 3, 1.0), nullptr, 40000, rng);
  EXPECT_NEAR(mc.pwer, 0.5 * 0.05, 3.5 * mc.se);
  EXPECT_THROW(mc_true_pwer(model, std::vector<double>{1, 2, 3}, prev, design::CellGrid(2, 3, 1.0),
                            nullptr, 10, rng),
               ConfigError);
}

// ---------------------------------------------------------------------------
// Least favourable configuration
// ---------------------------------------------------------------------------

TEST(Lfc, NegativeEffectsDoNotRaiseThePwer) {
  auto null_spec = small_spec();
  null_spec.replicates = 3;
  null_spec.data_replicates = 2000;
  auto eff = null_spec;
  design::CellGrid mu(3, 4, 0.0);
  for (std::uint32_t mask = 1; mask <= 7; ++mask) {
    for (Arm a = 1; a < 4; ++a) mu.at(mask, a) = -0.2;
  }
  eff.effects = mu;
  const auto rep = lfc_check(eff, null_spec);
  EXPECT_FALSE(rep.any_violation);
  for (const auto& d : rep.designs) EXPECT_LE(d.pwer_theta, d.pwer_zero);
}

TEST(Lfc, RejectsPositiveEffects) {
  auto null_spec = small_spec();
  auto eff = null_spec;
  design::CellGrid mu(3, 4, 0.0);
  mu.at(1, 1) = 0.1;
  eff.effects = mu;
  EXPECT_THROW(lfc_check(eff, null_spec), ConfigError);
}

// ---------------------------------------------------------------------------
// Empty strata
// ---------------------------------------------------------------------------

TEST(EmptyStratum, ZeroFloorLeavesBoundaryUnchanged) {
  ScenarioSpec spec = small_spec();
  spec.N = 100;
  spec.replicates = 6;
  spec.biomarkers = UniformRandomPerRep{0.02, 0.09};
  const auto study = empty_stratum_study(spec, 0.0);
  ASSERT_FALSE(study.records.empty());
  for (const auto& r : study.records) {
    EXPECT_EQ(r.c_hat, r.c_min);
    EXPECT_EQ(r.adjusted.pwer, r.unadjusted.pwer);
  }
}

TEST(EmptyStratum, AdjustmentRaisesBoundaryAndLowersRates) {
  ScenarioSpec spec = small_spec();
  spec.N = 100;
  spec.replicates = 6;
  spec.biomarkers = UniformRandomPerRep{0.02, 0.09};
  const auto study = empty_stratum_study(spec, std::nullopt);
  ASSERT_FALSE(study.records.empty());
  for (const auto& r : study.records) {
    EXPECT_GE(r.c_min, r.c_hat);
    EXPECT_LE(r.adjusted.pwer, r.unadjusted.pwer + 1e-12);
    EXPECT_LE(r.adjusted.max_swer, r.unadjusted.max_swer + 1e-12);
  }
  EXPECT_EQ(static_cast<int>(study.records.size()) + study.skipped_without_empty_stratum +
                [&] {
                  int n = 0;
                  for (const auto& [k, v] : study.failures) n += v;
                  return n;
                }(),
            6);
}

TEST(EmptyStratum, RequiresRareBiomarkers) {
  ScenarioSpec spec = small_spec();
  spec.biomarkers = UniformRandomPerRep{0.0, 0.5};
  EXPECT_THROW(empty_stratum_study(spec, std::nullopt), ConfigError);
}

TEST(Digest, SensitiveToCells) {
  CountTable a(2, TreatmentStructure::AllDifferent, {4, 4, 4});
  Rng rng = substream(1, 1);
  const auto x = allocate(a, AllocationPolicy::Stratified, rng);
  auto y = x;
  y.set_cell(StrataIndex(3, 2), 0, 1);
  y.set_cell(StrataIndex(3, 2), 1, 2);
  EXPECT_NE(counts_digest(x), counts_digest(y));
  EXPECT_EQ(counts_digest(x), counts_digest(x));
}

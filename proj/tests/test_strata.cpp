#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pwer/error.hpp"
#include "pwer/mvdist.hpp"
#include "pwer/strata.hpp"

using namespace pwer;

TEST(StrataIndex, MaskAndMembers) {
  const auto j = StrataIndex::of({1, 3}, 3);
  EXPECT_EQ(j.mask(), 0b101u);
  EXPECT_EQ(j.size(), 2);
  EXPECT_TRUE(j.contains(0));
  EXPECT_FALSE(j.contains(1));
  EXPECT_EQ(j.members(), (std::vector<int>{0, 2}));
  EXPECT_EQ(j.to_string(), "{1,3}");
  EXPECT_EQ(j.ordinal(), 4u);
}

TEST(StrataIndex, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(StrataIndex(0, 3), ConfigError);
  EXPECT_THROW(StrataIndex(8, 3), ConfigError);
  EXPECT_THROW(StrataIndex::of({4}, 3), ConfigError);
}

TEST(Strata, CountAndEnumeration) {
  for (int m = 1; m <= 8; ++m) {
    const auto all = enumerate_strata(m);
    ASSERT_EQ(all.size(), (1u << m) - 1);
    EXPECT_EQ(strata_count(m), all.size());
    for (std::size_t k = 0; k < all.size(); ++k) EXPECT_EQ(all[k].ordinal(), k);
  }
  EXPECT_EQ(strata_count(1), 1u);
  EXPECT_EQ(strata_count(3), 7u);
}

TEST(PrevalenceVector, ValidatesAndSharesPopulations) {
  EXPECT_THROW(PrevalenceVector(2, {0.5, 0.6, 0.0}), ConfigError);
  EXPECT_THROW(PrevalenceVector(2, {-0.1, 0.6, 0.5}), ConfigError);
  EXPECT_THROW(PrevalenceVector(2, {0.5, 0.5}), ConfigError);
  const PrevalenceVector p(2, {0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(p.population_share(0), 0.7);
  EXPECT_DOUBLE_EQ(p.population_share(1), 0.8);
  EXPECT_DOUBLE_EQ(p[StrataIndex::of({1, 2}, 2)], 0.5);
}

TEST(StrataProbabilities, IndependentProductFormula) {
  const BiomarkerModel model{{0.3, 0.6, 0.8}, IndependentBiomarkers{}};
  const auto prev = strata_probabilities(model);
  const double none = 0.7 * 0.4 * 0.2;
  for (const auto& j : enumerate_strata(3)) {
    double prod = 1.0;
    for (int i = 0; i < 3; ++i) prod *= j.contains(i) ? model.p[i] : 1.0 - model.p[i];
    EXPECT_NEAR(prev[j], prod / (1.0 - none), 1e-15) << j.to_string();
  }
}

TEST(StrataProbabilities, CopulaWithIdentityMatchesIndependence) {
  const BiomarkerModel indep{{0.25, 0.5, 0.7}, IndependentBiomarkers{}};
  const BiomarkerModel cop{{0.25, 0.5, 0.7}, GaussianCopula{Eigen::MatrixXd::Identity(3, 3)}};
  const auto a = strata_probabilities(indep);
  const auto b = strata_probabilities(cop);
  for (const auto& j : enumerate_strata(3)) EXPECT_NEAR(a[j], b[j], 1e-6);
}

TEST(StrataProbabilities, CopulaTwoBiomarkersMatchesBivariateNormal) {
  Eigen::MatrixXd r(2, 2);
  r << 1.0, 0.4, 0.4, 1.0;
  const BiomarkerModel cop{{0.3, 0.5}, GaussianCopula{r}};
  const auto prev = strata_probabilities(cop);
  const double t1 = mvdist::norm_quantile(0.3), t2 = mvdist::norm_quantile(0.5);
  const double both = mvdist::bvn_cdf(t1, t2, 0.4);
  const double only1 = 0.3 - both, only2 = 0.5 - both;
  const double any = both + only1 + only2;
  EXPECT_NEAR(prev.at_mask(1), only1 / any, 1e-9);
  EXPECT_NEAR(prev.at_mask(2), only2 / any, 1e-9);
  EXPECT_NEAR(prev.at_mask(3), both / any, 1e-9);
}

TEST(BiomarkerModel, RejectsInvalidProbabilities) {
  EXPECT_THROW((BiomarkerModel{{0.0, 0.0}, IndependentBiomarkers{}}.validate()), DegenerateError);
  EXPECT_THROW((BiomarkerModel{{1.2, 0.5}, IndependentBiomarkers{}}.validate()), ConfigError);
}

TEST(CountTable, ArmsAndEligibility) {
  CountTable all(3, TreatmentStructure::AllDifferent);
  EXPECT_EQ(all.arm_count(), 4);
  const auto j = StrataIndex::of({1, 3}, 3);
  EXPECT_EQ(all.eligible_arms(j), (std::vector<Arm>{0, 1, 3}));
  EXPECT_FALSE(all.eligible(j, 2));
  EXPECT_EQ(all.treatment_arm(2), 3);

  CountTable single(3, TreatmentStructure::SingleTreatment);
  EXPECT_EQ(single.arm_count(), 2);
  EXPECT_EQ(single.eligible_arms(j), (std::vector<Arm>{0, 1}));
  EXPECT_EQ(single.treatment_arm(2), 1);
}

TEST(CountTable, ValidateCatchesInconsistentCells) {
  CountTable t(2, TreatmentStructure::AllDifferent, {4, 0, 0});
  const auto j = StrataIndex::of({1}, 2);
  t.set_cell(j, 0, 2);
  t.set_cell(j, 1, 1);
  EXPECT_THROW(t.validate(), ConfigError);
  t.set_cell(j, 1, 2);
  EXPECT_NO_THROW(t.validate());
  EXPECT_THROW(t.set_cell(j, 2, 1), ConfigError);
}

TEST(SampleCounts, SumsToNAndTracksPrevalences) {
  const PrevalenceVector prev(2, {0.5, 0.3, 0.2});
  Rng rng = substream(7, 0);
  std::vector<double> totals(3, 0.0);
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    const auto c = sample_counts(prev, 100, TreatmentStructure::AllDifferent, rng);
    EXPECT_EQ(c.total(), 100);
    for (std::size_t k = 0; k < 3; ++k) totals[k] += static_cast<double>(c.per_stratum()[k]);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double p = prev.weights()[k];
    const double se = std::sqrt(p * (1 - p) * 100.0 / reps);
    EXPECT_NEAR(totals[k] / reps, 100.0 * p, 4.0 * se);
  }
}

TEST(SampleCounts, ZeroWeightStrataStayEmpty) {
  const PrevalenceVector prev(2, {0.6, 0.4, 0.0});
  Rng rng = substream(3, 1);
  for (int r = 0; r < 200; ++r) {
    EXPECT_EQ(sample_counts(prev, 50, TreatmentStructure::AllDifferent, rng).n_mask(3), 0);
  }
}

TEST(Allocate, StratifiedSplitsEquallyWithRemainderFromControl) {
  CountTable t(2, TreatmentStructure::AllDifferent, {10, 7, 8});
  Rng rng = substream(1, 1);
  const auto a = allocate(t, AllocationPolicy::Stratified, rng);
  EXPECT_EQ(a.n(StrataIndex(1, 2), 0), 5);
  EXPECT_EQ(a.n(StrataIndex(1, 2), 1), 5);
  EXPECT_EQ(a.n(StrataIndex(2, 2), 0), 4);
  EXPECT_EQ(a.n(StrataIndex(2, 2), 2), 3);
  // {1,2}: 8 over (C, T1, T2) -> 3, 3, 2
  EXPECT_EQ(a.n(StrataIndex(3, 2), 0), 3);
  EXPECT_EQ(a.n(StrataIndex(3, 2), 1), 3);
  EXPECT_EQ(a.n(StrataIndex(3, 2), 2), 2);
}

TEST(Allocate, RandomAndPragmaticKeepStratumTotals) {
  CountTable t(3, TreatmentStructure::AllDifferent, {20, 15, 9, 30, 4, 11, 6});
  for (auto policy : {AllocationPolicy::RandomArrival, AllocationPolicy::PragmaticArrival}) {
    Rng rng = substream(11, static_cast<std::uint64_t>(policy));
    const auto a = allocate(t, policy, rng);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.total(), t.total());
  }
}

TEST(Allocate, PragmaticKeepsTreatmentAndControlBalanced) {
  CountTable t(2, TreatmentStructure::AllDifferent, {40, 30, 51});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = substream(5, seed);
    const auto a = allocate(t, AllocationPolicy::PragmaticArrival, rng);
    Count control = 0;
    for (std::uint32_t mask = 1; mask <= 3; ++mask) control += a.cell_mask(mask, kControl);
    const Count treated = a.population_arm(0, 1) + a.population_arm(1, 2);
    // each subtrial is balanced to within one patient
    EXPECT_LE(std::abs(static_cast<long>(treated - control)), 2);
    EXPECT_EQ(treated + control, 121);
  }
}

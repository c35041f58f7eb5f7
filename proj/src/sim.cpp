#include "pwer/sim.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "pwer/error.hpp"
#include "pwer/prevalence.hpp"

namespace pwer::sim {
namespace {

constexpr std::uint64_t kDataSalt = 0x64617461;  // "data"

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(0..n-1) on a small pool. The first exception is rethrown after all
// workers stop.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::min(resolve_threads(threads), std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n || stop.load()) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Maps an exception raised inside one replicate to an exclusion reason, or
// rethrows when the failure is not replicate-specific.
std::string failure_reason() {
  try {
    throw;
  } catch (const design::UndefinedStatistic&) {
    return "population without treatment or control patients";
  } catch (const BudgetExceeded&) {
    return "integration budget exceeded";
  } catch (const DegenerateError&) {
    return "degenerate replicate";
  } catch (const NumericalError&) {
    return "numerical failure";
  }
}

bool has_regime_variances(VarianceKind k) {
  return k == VarianceKind::KnownHeterogeneous || k == VarianceKind::UnknownHeterogeneous;
}

BiomarkerModel draw_biomarkers(const ScenarioSpec& spec, Rng& rng) {
  BiomarkerModel model;
  model.dependence = std::visit([](const auto& d) -> decltype(model.dependence) { return d; },
                                spec.dependence);
  std::visit(
      [&](const auto& mode) {
        using M = std::decay_t<decltype(mode)>;
        if constexpr (std::is_same_v<M, FixedProbs>) {
          model.p = mode.p;
        } else {
          std::uniform_real_distribution<double> u(mode.lo, mode.hi);
          model.p.resize(spec.m);
          for (auto& v : model.p) {
            do v = u(rng);
            while (v <= 0.0);
          }
        }
      },
      spec.biomarkers);
  return model;
}

PrevalenceVector true_prevalence(const ScenarioSpec& spec, const BiomarkerModel& model) {
  auto prev = strata_probabilities(model, spec.budget);
  const auto* pin = std::get_if<OnePrevalencePinned>(&spec.biomarkers);
  if (!pin) return prev;
  std::vector<double> w(prev.weights().begin(), prev.weights().end());
  const double rest = 1.0 - w[pin->mask - 1];
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (k + 1 == pin->mask) {
      w[k] = pin->value;
    } else {
      w[k] = rest > 0.0 ? w[k] * (1.0 - pin->value) / rest
                        : (1.0 - pin->value) / static_cast<double>(w.size() - 1);
    }
  }
  return PrevalenceVector::normalized(spec.m, std::move(w));
}

// Probability that a screened patient expresses no biomarker.
double none_probability(const BiomarkerModel& model, const mvdist::Budget& budget) {
  if (std::holds_alternative<IndependentBiomarkers>(model.dependence)) {
    double q = 1.0;
    for (double p : model.p) q *= 1.0 - p;
    return q;
  }
  const auto& r = std::get<GaussianCopula>(model.dependence).correlation;
  std::vector<double> lo(model.p.size()), hi(model.p.size(), mvdist::kInf);
  for (std::size_t i = 0; i < lo.size(); ++i) lo[i] = mvdist::norm_quantile(model.p[i]);
  return mvdist::mvn_rectangle(lo, hi, mvdist::CorrelationMatrix(r), budget).value;
}

design::CellGrid draw_variances(const ScenarioSpec& spec, const CountTable& counts, Rng& rng) {
  design::CellGrid g(spec.m, counts.arm_count(), spec.variance.variance);
  if (!has_regime_variances(spec.variance.kind)) return g;
  std::uniform_real_distribution<double> u(spec.variance.lo, spec.variance.hi);
  for (const auto& j : enumerate_strata(spec.m)) {
    for (Arm a : counts.eligible_arms(j)) g(j, a) = u(rng);
  }
  return g;
}

PrevalenceVector estimate(const ScenarioSpec& spec, const CountTable& counts) {
  if (std::holds_alternative<Marginal>(spec.estimator)) return prevalence::marginal(counts).prevalence;
  return prevalence::mle(counts);
}

bool any_empty(const CountTable& counts) {
  return std::ranges::any_of(counts.per_stratum(), [](Count n) { return n == 0; });
}

// One replicate up to the boundary: design, estimated prevalences, model.
struct Prepared {
  PrevalenceVector truth;
  CountTable counts;
  design::CellGrid variances;
  design::DesignModel model;
  PrevalenceVector prev_hat;
};

struct Drawn {
  PrevalenceVector truth;
  CountTable counts;
};

Drawn draw_design(const ScenarioSpec& spec, Rng& rng) {
  const auto biomarkers = draw_biomarkers(spec, rng);
  auto truth = true_prevalence(spec, biomarkers);
  auto counts = sample_counts(truth, spec.N, spec.structure, rng);
  if (std::holds_alternative<Marginal>(spec.estimator)) {
    const double none = none_probability(biomarkers, spec.budget);
    if (none > 0.0 && spec.N > 0) {
      // Biomarker-free screens observed before the N-th eligible patient.
      std::negative_binomial_distribution<Count> screens(spec.N, 1.0 - none);
      counts.empty_stratum_count = screens(rng);
    }
  }
  return {std::move(truth), allocate(counts, spec.allocation, rng)};
}

Prepared prepare(const ScenarioSpec& spec, Rng& rng) {
  auto drawn = draw_design(spec, rng);
  auto variances = draw_variances(spec, drawn.counts, rng);
  design::VarianceRegime regime;
  switch (spec.variance.kind) {
    case VarianceKind::KnownHomogeneous:
      regime = design::KnownHomogeneous{spec.variance.variance};
      break;
    case VarianceKind::UnknownHomogeneous:
      regime = design::unknown_homogeneous_from_counts(drawn.counts, spec.variance.variance);
      break;
    case VarianceKind::KnownHeterogeneous:
      regime = design::KnownHeterogeneous{variances};
      break;
    case VarianceKind::UnknownHeterogeneous: {
      const auto observed = simulate_cells(drawn.counts, variances,
                                           spec.effects ? &*spec.effects : nullptr, rng);
      regime = design::estimate_heterogeneous(drawn.counts, observed);
      break;
    }
  }
  auto model = design::build_model(drawn.counts, regime);
  auto prev_hat = estimate(spec, drawn.counts);
  return {std::move(drawn.truth), std::move(drawn.counts), std::move(variances), std::move(model),
          std::move(prev_hat)};
}

// Boundary from the estimated prevalences.
control::CriticalValueResult solve(const ScenarioSpec& spec, const Prepared& p,
                                   control::PwerEvaluator* ev) {
  if (spec.variance.kind == VarianceKind::UnknownHeterogeneous) {
    return control::solve_per_population(p.prev_hat, p.model, spec.alpha, spec.budget);
  }
  if (const auto* adj = std::get_if<MleWithMinPrevalence>(&spec.estimator)) {
    return control::solve_min_adjusted(p.prev_hat, p.model, spec.alpha, adj->pi_min, spec.budget);
  }
  return control::solve_equal(*ev, p.prev_hat, spec.alpha);
}

bool null_effects(const ScenarioSpec& spec) {
  if (!spec.effects) return true;
  const auto& g = *spec.effects;
  for (const auto& j : enumerate_strata(spec.m)) {
    for (Arm a = 0; a < g.arms(); ++a) {
      if (g(j, a) != g(j, kControl)) return false;
    }
  }
  return true;
}

double quantile7(const std::vector<double>& sorted, double prob) {
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

// Indices of the populations with a rejection, as a bit mask.
std::uint32_t rejections(std::span<const double> stats, std::span<const double> boundaries) {
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double c = boundaries.size() == 1 ? boundaries[0] : boundaries[i];
    if (stats[i] > c) mask |= 1u << i;
  }
  return mask;
}

void add_means(design::SummaryGrid& data, const design::CellGrid& means) {
  for (std::uint32_t mask = 1; mask <= strata_count(data.m()); ++mask) {
    for (Arm a = 0; a < data.arms(); ++a) data.at(mask, a).mean += means.at(mask, a);
  }
}

}  // namespace

void ScenarioSpec::validate() const {
  if (m < 1 || m > kMaxPopulations) {
    throw ConfigError("m must lie in [1, " + std::to_string(kMaxPopulations) + "]");
  }
  if (N < 1) throw ConfigError("N must be positive");
  if (replicates < 1) throw ConfigError("replicates must be at least 1");
  if (data_replicates < 1) throw ConfigError("data replicates must be at least 1");
  if (!(alpha > 0.0 && alpha <= 0.5)) throw ConfigError("alpha must lie in (0, 0.5]");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  std::visit(
      [&](const auto& mode) {
        using M = std::decay_t<decltype(mode)>;
        if constexpr (std::is_same_v<M, FixedProbs>) {
          if (static_cast<int>(mode.p.size()) != m) {
            throw ConfigError("fixed biomarker probabilities need one value per population");
          }
          BiomarkerModel{mode.p, {}}.validate();
        } else {
          if (!(mode.lo >= 0.0 && mode.hi <= 1.0 && mode.lo < mode.hi)) {
            throw ConfigError("random biomarker probabilities need 0 <= lo < hi <= 1");
          }
          if constexpr (std::is_same_v<M, OnePrevalencePinned>) {
            if (!(mode.value > 0.0 && mode.value < 1.0)) {
              throw ConfigError("pinned prevalence must lie in (0, 1)");
            }
            if (mode.mask < 1 || mode.mask > strata_count(m)) {
              throw ConfigError("pinned stratum does not exist for m = " + std::to_string(m));
            }
          }
        }
      },
      biomarkers);
  if (const auto* cop = std::get_if<GaussianCopula>(&dependence)) {
    if (cop->correlation.rows() != m || cop->correlation.cols() != m) {
      throw ConfigError("biomarker correlation must be m x m");
    }
    mvdist::CorrelationMatrix check(cop->correlation);
    (void)check;
  }
  if (!(variance.variance > 0.0)) throw ConfigError("variance must be positive");
  if (has_regime_variances(variance.kind) && !(variance.lo > 0.0 && variance.lo <= variance.hi)) {
    throw ConfigError("heterogeneous variance range needs 0 < lo <= hi");
  }
  if (variance.kind == VarianceKind::UnknownHeterogeneous &&
      std::holds_alternative<MleWithMinPrevalence>(estimator)) {
    throw ConfigError("the minimal-prevalence estimator is not available with per-population boundaries");
  }
  if (const auto* adj = std::get_if<MleWithMinPrevalence>(&estimator); adj && adj->pi_min) {
    const double cap = 1.0 / static_cast<double>(strata_count(m));
    if (!(*adj->pi_min >= 0.0 && *adj->pi_min < cap)) throw ConfigError("pi_min out of range");
  }
  if (effects) {
    const CountTable shape(m, structure);
    if (effects->m() != m || effects->arms() != shape.arm_count()) {
      throw ConfigError("effects table does not match m and the treatment structure");
    }
    for (const auto& j : enumerate_strata(m)) {
      for (Arm a : shape.eligible_arms(j)) {
        if (!std::isfinite((*effects)(j, a))) {
          throw ConfigError("missing mean for stratum " + j.to_string());
        }
      }
    }
  }
}

std::uint64_t counts_digest(const CountTable& counts) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](Count v) {
    auto u = static_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (u >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (std::uint32_t mask = 1; mask <= counts.per_stratum().size(); ++mask) {
    mix(counts.n_mask(mask));
    for (Arm a = 0; a < counts.arm_count(); ++a) mix(counts.cell_mask(mask, a));
  }
  mix(counts.empty_stratum_count);
  return h;
}

design::SummaryGrid simulate_cells(const CountTable& counts, const design::CellGrid& variances,
                                   const design::CellGrid* means, Rng& rng) {
  design::SummaryGrid g(counts.m(), counts.arm_count());
  std::normal_distribution<double> z;
  for (std::uint32_t mask = 1; mask <= counts.per_stratum().size(); ++mask) {
    for (Arm a = 0; a < counts.arm_count(); ++a) {
      const Count n = counts.cell_mask(mask, a);
      if (n == 0) continue;
      auto& cell = g.at(mask, a);
      const double s2 = variances.at(mask, a);
      const double nd = static_cast<double>(n);
      cell.n = n;
      cell.mean = (means ? means->at(mask, a) : 0.0) + std::sqrt(s2 / nd) * z(rng);
      if (n > 1) {
        std::chi_squared_distribution<double> chi(nd - 1.0);
        cell.variance = s2 * chi(rng) / (nd - 1.0);
      }
    }
  }
  return g;
}

McEstimate mc_true_pwer(const design::DesignModel& model, std::span<const double> boundaries,
                        const PrevalenceVector& true_prev, const design::CellGrid& true_variances,
                        const design::CellGrid* means, int reps, Rng& rng) {
  if (reps < 1) throw ConfigError("data replicates must be at least 1");
  if (boundaries.size() != 1 && static_cast<int>(boundaries.size()) != model.m) {
    throw ConfigError("boundaries need one common value or one per population");
  }
  const auto w = true_prev.weights();
  std::vector<double> hits(w.size(), 0.0);
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto data = simulate_cells(model.counts, true_variances, means, rng);
    const auto stats = design::statistics(model, data);
    const std::uint32_t rejected = rejections(stats, boundaries);
    double x = 0.0;
    if (rejected) {
      for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
        if (mask & rejected) {
          hits[mask - 1] += 1.0;
          x += w[mask - 1];
        }
      }
    }
    sum += x;
    sumsq += x * x;
  }
  McEstimate out;
  out.replicates = reps;
  const double n = static_cast<double>(reps);
  out.pwer = sum / n;
  out.se = reps > 1 ? std::sqrt(std::max(0.0, sumsq - n * out.pwer * out.pwer) / (n - 1) / n) : 0.0;
  double total = 0.0;
  for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
    if (!(w[mask - 1] > 0.0)) continue;
    const double f = hits[mask - 1] / n;
    out.swer.emplace(StrataIndex(mask, model.m), f);
    out.max_swer = std::max(out.max_swer, f);
    total += f;
  }
  out.mean_swer = out.swer.empty() ? 0.0 : total / static_cast<double>(out.swer.size());
  return out;
}

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const bool simulate_truth =
      spec.variance.kind == VarianceKind::UnknownHeterogeneous || !null_effects(spec);

  std::vector<std::optional<RepRecord>> out(spec.replicates);
  std::vector<std::string> reasons(spec.replicates);
  parallel_for(spec.replicates, spec.threads, [&](int i) {
    Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i));
    try {
      const auto p = prepare(spec, rng);
      RepRecord rec;
      rec.replicate = static_cast<std::uint64_t>(i);
      rec.counts_digest = counts_digest(p.counts);
      rec.had_empty_stratum = any_empty(p.counts);
      if (simulate_truth) {
        std::optional<control::PwerEvaluator> ev;
        if (spec.variance.kind != VarianceKind::UnknownHeterogeneous) ev.emplace(p.model, spec.budget);
        const auto crit = solve(spec, p, ev ? &*ev : nullptr);
        Rng data = substream(spec.seed, static_cast<std::uint64_t>(i), kDataSalt);
        const auto mc = mc_true_pwer(p.model, crit.boundary, p.truth, p.variances,
                                     spec.effects ? &*spec.effects : nullptr, spec.data_replicates,
                                     data);
        rec.boundary = crit.boundary;
        rec.true_pwer = mc.pwer;
        rec.mc_error = mc.se;
        rec.max_swer = mc.max_swer;
        rec.mean_swer = mc.mean_swer;
      } else {
        control::PwerEvaluator ev(p.model, spec.budget);
        const auto crit = solve(spec, p, &ev);
        const auto rates = ev.rates(crit.c(), p.truth);
        rec.boundary = crit.boundary;
        rec.true_pwer = rates.pwer;
        rec.max_swer = rates.max_swer;
        rec.mean_swer = rates.mean_swer;
      }
      out[i] = std::move(rec);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      reasons[i] = failure_reason();
    }
  });

  ScenarioResult res;
  res.attempted = spec.replicates;
  for (int i = 0; i < spec.replicates; ++i) {
    if (out[i]) {
      res.records.push_back(std::move(*out[i]));
    } else {
      ++res.failures[reasons[i]];
    }
  }
  return res;
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::TruePwer:
      return "true_pwer";
    case Metric::MaxSwer:
      return "max_swer";
    case Metric::MeanSwer:
      return "mean_swer";
  }
  return "?";
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw DegenerateError("no records to summarize");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  SummaryStats s;
  s.n = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile7(v, 0.25);
  s.median = quantile7(v, 0.5);
  s.q3 = quantile7(v, 0.75);
  return s;
}

SummaryStats summarize(std::span<const RepRecord> records, Metric metric) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) {
    v.push_back(metric == Metric::TruePwer  ? r.true_pwer
                : metric == Metric::MaxSwer ? r.max_swer
                                            : r.mean_swer);
  }
  return summarize(v);
}

LfcReport lfc_check(const ScenarioSpec& with_effects, const ScenarioSpec& null_spec) {
  with_effects.validate();
  null_spec.validate();
  if (!with_effects.effects) throw ConfigError("lfc check needs effects");
  if (!null_effects(null_spec)) throw ConfigError("the comparison scenario must have zero effects");
  if (with_effects.m != null_spec.m || with_effects.N != null_spec.N ||
      with_effects.seed != null_spec.seed || with_effects.replicates != null_spec.replicates ||
      with_effects.structure != null_spec.structure ||
      with_effects.variance.kind != null_spec.variance.kind) {
    throw ConfigError("lfc scenarios must differ only in their effects");
  }
  const auto& mu = *with_effects.effects;
  const CountTable shape(with_effects.m, with_effects.structure);
  for (const auto& j : enumerate_strata(with_effects.m)) {
    for (int i : j.members()) {
      const double theta = mu(j, shape.treatment_arm(i)) - mu(j, kControl);
      if (theta > 0.0) {
        std::ostringstream os;
        os << "positive effect " << theta << " for population " << i + 1 << " in stratum "
           << j.to_string() << "; the check covers effects <= 0 only";
        throw ConfigError(os.str());
      }
    }
  }

  const auto& spec = with_effects;
  std::vector<std::optional<LfcDesign>> out(spec.replicates);
  std::vector<std::string> reasons(spec.replicates);
  parallel_for(spec.replicates, spec.threads, [&](int i) {
    Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i));
    try {
      // The null scenario draws the same design: effects only enter the data.
      ScenarioSpec design_spec = null_spec;
      const auto p = prepare(design_spec, rng);
      std::optional<control::PwerEvaluator> ev;
      if (spec.variance.kind != VarianceKind::UnknownHeterogeneous) ev.emplace(p.model, spec.budget);
      const auto crit = solve(design_spec, p, ev ? &*ev : nullptr);

      Rng data = substream(spec.seed, static_cast<std::uint64_t>(i), kDataSalt);
      const auto w = p.truth.weights();
      auto weight = [&](std::uint32_t rejected) {
        double x = 0.0;
        if (!rejected) return x;
        for (std::uint32_t mask = 1; mask <= w.size(); ++mask) {
          if (mask & rejected) x += w[mask - 1];
        }
        return x;
      };
      double s_theta = 0.0, s_zero = 0.0, s_d = 0.0, ss_d = 0.0;
      const int reps = spec.data_replicates;
      for (int r = 0; r < reps; ++r) {
        auto zero = simulate_cells(p.counts, p.variances, nullptr, data);
        const double x0 = weight(rejections(design::statistics(p.model, zero), crit.boundary));
        add_means(zero, mu);
        const double x1 = weight(rejections(design::statistics(p.model, zero), crit.boundary));
        s_theta += x1;
        s_zero += x0;
        s_d += x1 - x0;
        ss_d += (x1 - x0) * (x1 - x0);
      }
      const double n = static_cast<double>(reps);
      LfcDesign d;
      d.replicate = static_cast<std::uint64_t>(i);
      d.boundary = crit.c();
      d.pwer_theta = s_theta / n;
      d.pwer_zero = s_zero / n;
      d.diff = s_d / n;
      d.se_diff = reps > 1 ? std::sqrt(std::max(0.0, ss_d - n * d.diff * d.diff) / (n - 1) / n) : 0.0;
      d.violation = d.diff > 3.0 * d.se_diff && d.diff > 0.0;
      out[i] = d;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      reasons[i] = failure_reason();
    }
  });

  LfcReport rep;
  for (int i = 0; i < spec.replicates; ++i) {
    if (out[i]) {
      rep.any_violation = rep.any_violation || out[i]->violation;
      rep.designs.push_back(*out[i]);
    } else {
      ++rep.failures[reasons[i]];
    }
  }
  return rep;
}

EmptyStratumStudy empty_stratum_study(const ScenarioSpec& spec, std::optional<double> pi_min) {
  spec.validate();
  std::visit(
      [](const auto& mode) {
        using M = std::decay_t<decltype(mode)>;
        if constexpr (std::is_same_v<M, FixedProbs>) {
          for (double p : mode.p) {
            if (!(p < 0.1)) throw ConfigError("biomarker probabilities must lie below 0.1");
          }
        } else {
          if (!(mode.hi <= 0.1)) throw ConfigError("biomarker probabilities must lie below 0.1");
        }
      },
      spec.biomarkers);
  if (spec.variance.kind == VarianceKind::UnknownHeterogeneous) {
    throw ConfigError("the empty-stratum study needs a regime with an exact null distribution");
  }

  std::vector<std::optional<EmptyStratumRecord>> out(spec.replicates);
  std::vector<std::string> reasons(spec.replicates);
  std::vector<char> skipped(spec.replicates, 0);
  parallel_for(spec.replicates, spec.threads, [&](int i) {
    Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i));
    try {
      ScenarioSpec mle_spec = spec;
      mle_spec.estimator = Mle{};
      const auto p = prepare(mle_spec, rng);
      if (!any_empty(p.counts)) {
        skipped[i] = 1;
        return;
      }
      control::PwerEvaluator ev(p.model, spec.budget);
      const auto c_hat = control::solve_equal(ev, p.prev_hat, spec.alpha).c();
      const auto adjusted = prevalence::min_prevalence_adjust(p.prev_hat, pi_min);
      const double c_min = adjusted.raised.empty()
                               ? c_hat
                               : control::solve_equal(ev, adjusted.prevalence, spec.alpha).c();
      EmptyStratumRecord rec;
      rec.replicate = static_cast<std::uint64_t>(i);
      rec.c_hat = c_hat;
      rec.c_min = c_min;
      rec.unadjusted = ev.rates(c_hat, p.truth);
      rec.adjusted = c_min == c_hat ? rec.unadjusted : ev.rates(c_min, p.truth);
      out[i] = std::move(rec);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      reasons[i] = failure_reason();
    }
  });

  EmptyStratumStudy study;
  study.attempted = spec.replicates;
  for (int i = 0; i < spec.replicates; ++i) {
    if (out[i]) {
      study.records.push_back(std::move(*out[i]));
    } else if (skipped[i]) {
      ++study.skipped_without_empty_stratum;
    } else {
      ++study.failures[reasons[i]];
    }
  }
  if (study.records.empty()) {
    throw DegenerateError("no replicate had an unobserved stratum; increase the number of replicates");
  }
  return study;
}

SummaryStats summarize(std::span<const EmptyStratumRecord> records, StudyMetric metric,
                       bool adjusted) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) {
    const auto& rep = adjusted ? r.adjusted : r.unadjusted;
    v.push_back(metric == StudyMetric::TruePwer  ? rep.pwer
                : metric == StudyMetric::MaxSwer ? rep.max_swer
                                                 : rep.mean_swer);
  }
  return summarize(v);
}

}  // namespace pwer::sim

#include "pwer/design.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pwer::design {
namespace {

std::string population_name(int i) { return "population " + std::to_string(i + 1); }

void check_variance(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive and finite");
  }
}

// Cell variance entering V_i and Sigma. Homogeneous regimes use the common
// value so that V_i = sigma^2 H_i.
struct VarianceView {
  const VarianceRegime& regime;
  double operator()(std::uint32_t mask, Arm arm) const { return cell_variance(regime, mask, arm); }
};

}  // namespace

CellGrid::CellGrid(int m, int arms, double fill)
    : m_(m), arms_(arms), v_(strata_count(m) * static_cast<std::size_t>(arms), fill) {}

double common_df(const DfModel& model) {
  if (std::holds_alternative<Gaussian>(model)) return std::numeric_limits<double>::infinity();
  if (const auto* p = std::get_if<PooledT>(&model)) return p->df;
  throw ConfigError("per-population degrees of freedom have no common value; "
                    "use the per-population solver");
}

double cell_variance(const VarianceRegime& regime, std::uint32_t mask, Arm arm) {
  return std::visit(
      [&](const auto& r) -> double {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, KnownHomogeneous>) {
          return r.variance;
        } else if constexpr (std::is_same_v<R, UnknownHomogeneous>) {
          return r.pooled_variance;
        } else {
          return r.variances.at(mask, arm);
        }
      },
      regime);
}

UnknownHomogeneous unknown_homogeneous_from_counts(const CountTable& counts,
                                                   double pooled_variance) {
  int s = 0;
  for (std::uint32_t mask = 1; mask <= counts.per_stratum().size(); ++mask) {
    for (Arm a = 0; a < counts.arm_count(); ++a) {
      if (counts.cell_mask(mask, a) > 1) ++s;
    }
  }
  const double df = static_cast<double>(counts.total() - s);
  if (df < 1.0) throw DegenerateError("pooled variance has no residual degrees of freedom");
  return UnknownHomogeneous{pooled_variance, s, df};
}

DesignModel build_model(const CountTable& counts, const VarianceRegime& regime) {
  counts.validate();
  if (!counts.allocated()) throw ConfigError("counts must be allocated to treatment arms");
  const int m = counts.m();
  const std::size_t strata = counts.per_stratum().size();
  const VarianceView var{regime};

  if (const auto* k = std::get_if<KnownHomogeneous>(&regime)) check_variance(k->variance, "variance");
  if (const auto* u = std::get_if<UnknownHomogeneous>(&regime)) {
    check_variance(u->pooled_variance, "pooled variance");
    if (u->df < 1.0) throw DegenerateError("pooled variance has no residual degrees of freedom");
  }

  std::vector<Count> n_t(m), n_c(m);
  for (int i = 0; i < m; ++i) {
    n_t[i] = counts.population_arm(i, counts.treatment_arm(i));
    n_c[i] = counts.population_arm(i, kControl);
    if (n_t[i] < 1) {
      throw UndefinedStatistic(i, population_name(i) + " has no patients on its treatment arm");
    }
    if (n_c[i] < 1) throw UndefinedStatistic(i, population_name(i) + " has no control patients");
  }

  std::vector<double> v(m, 0.0), h(m);
  for (int i = 0; i < m; ++i) {
    const Arm t = counts.treatment_arm(i);
    const double nt = static_cast<double>(n_t[i]);
    const double nc = static_cast<double>(n_c[i]);
    h[i] = 1.0 / nt + 1.0 / nc;
    for (std::uint32_t mask = 1; mask <= strata; ++mask) {
      if (!((mask >> i) & 1u)) continue;
      const Count ct = counts.cell_mask(mask, t);
      const Count cc = counts.cell_mask(mask, kControl);
      if (ct > 0) {
        const double s2 = var(mask, t);
        check_variance(s2, "cell variance");
        v[i] += static_cast<double>(ct) / (nt * nt) * s2;
      }
      if (cc > 0) {
        const double s2 = var(mask, kControl);
        check_variance(s2, "cell variance");
        v[i] += static_cast<double>(cc) / (nc * nc) * s2;
      }
    }
  }

  // Covariance of the mean differences, then scaled to a correlation. Only
  // shared strata contribute; shared treatment cells only exist when a single
  // treatment is tested everywhere.
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(m, m);
  const bool single = counts.structure() == TreatmentStructure::SingleTreatment;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double cov = 0.0;
      const std::uint32_t both = (1u << i) | (1u << j);
      for (std::uint32_t mask = 1; mask <= strata; ++mask) {
        if ((mask & both) != both) continue;
        const Count cc = counts.cell_mask(mask, kControl);
        if (cc > 0) {
          cov += static_cast<double>(cc) * var(mask, kControl) /
                 (static_cast<double>(n_c[i]) * static_cast<double>(n_c[j]));
        }
        if (single) {
          const Count ct = counts.cell_mask(mask, 1);
          if (ct > 0) {
            cov += static_cast<double>(ct) * var(mask, 1) /
                   (static_cast<double>(n_t[i]) * static_cast<double>(n_t[j]));
          }
        }
      }
      corr(i, j) = corr(j, i) = cov / std::sqrt(v[i] * v[j]);
    }
  }

  DfModel df = Gaussian{};
  bool approximate = false;
  if (const auto* u = std::get_if<UnknownHomogeneous>(&regime)) {
    df = PooledT{u->df};
  } else if (const auto* het = std::get_if<UnknownHeterogeneous>(&regime)) {
    if (static_cast<int>(het->treatment_variance.size()) != m ||
        static_cast<int>(het->control_variance.size()) != m) {
      throw ConfigError("heterogeneous regime needs population-level variances for every population");
    }
    PerPopulationT per;
    for (int i = 0; i < m; ++i) {
      per.df.push_back(satterthwaite_df(het->treatment_variance[i], n_t[i],
                                        het->control_variance[i], n_c[i]));
    }
    df = std::move(per);
    approximate = true;
  }

  return DesignModel{m,
                     counts,
                     regime,
                     counts.structure(),
                     std::move(v),
                     std::move(h),
                     mvdist::CorrelationMatrix(std::move(corr)),
                     std::move(df),
                     std::vector<double>(m, 0.0),
                     approximate};
}

CellSummary summarize_cell(std::span<const double> responses) {
  CellSummary s;
  s.n = static_cast<Count>(responses.size());
  if (s.n == 0) return s;
  double mean = 0.0;
  for (double x : responses) mean += x;
  mean /= static_cast<double>(s.n);
  s.mean = mean;
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : responses) ss += (x - mean) * (x - mean);
    s.variance = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

PooledVariance pooled_variance(std::span<const CellSummary> cells) {
  double ss = 0.0;
  Count total = 0;
  int s = 0;
  for (const auto& c : cells) {
    total += c.n;
    if (c.n > 1) {
      ss += static_cast<double>(c.n - 1) * c.variance;
      ++s;
    }
  }
  if (s == 0) throw DegenerateError("variance is inestimable: no cell has two or more observations");
  const double df = static_cast<double>(total - s);
  if (df < 1.0) throw DegenerateError("variance is inestimable: no residual degrees of freedom");
  return {ss / df, s, df};
}

double satterthwaite_df(double var_t, Count n_t, double var_c, Count n_c) {
  if (n_t < 2 || n_c < 2) {
    throw DegenerateError("Satterthwaite df is inestimable with fewer than two observations per arm");
  }
  check_variance(var_t, "treatment variance");
  check_variance(var_c, "control variance");
  const double a = var_t / static_cast<double>(n_t);
  const double b = var_c / static_cast<double>(n_c);
  return (a + b) * (a + b) /
         (a * a / static_cast<double>(n_t - 1) + b * b / static_cast<double>(n_c - 1));
}

UnknownHeterogeneous estimate_heterogeneous(const CountTable& counts, const SummaryGrid& data) {
  const int m = counts.m();
  const int arms = counts.arm_count();
  const std::size_t strata = counts.per_stratum().size();

  // Arm-level pooled variance used for single-patient cells.
  std::vector<double> arm_ss(arms, 0.0);
  std::vector<Count> arm_df(arms, 0);
  for (std::uint32_t mask = 1; mask <= strata; ++mask) {
    for (Arm a = 0; a < arms; ++a) {
      const auto& c = data.at(mask, a);
      if (c.n != counts.cell_mask(mask, a)) throw ConfigError("cell data disagree with the counts");
      if (c.n > 1) {
        arm_ss[a] += static_cast<double>(c.n - 1) * c.variance;
        arm_df[a] += c.n - 1;
      }
    }
  }

  UnknownHeterogeneous out{CellGrid(m, arms, 0.0), {}, {}};
  for (std::uint32_t mask = 1; mask <= strata; ++mask) {
    for (Arm a = 0; a < arms; ++a) {
      const auto& c = data.at(mask, a);
      if (c.n == 0) continue;
      if (c.n > 1) {
        out.variances.at(mask, a) = c.variance;
      } else if (arm_df[a] > 0) {
        out.variances.at(mask, a) = arm_ss[a] / static_cast<double>(arm_df[a]);
      } else {
        throw DegenerateError("variance of arm " + std::to_string(a) + " is inestimable");
      }
    }
  }

  // Sample variance of all responses on an arm within one population.
  auto population_variance = [&](int i, Arm a) {
    Count n = 0;
    double sum = 0.0;
    for (std::uint32_t mask = 1; mask <= strata; ++mask) {
      if (!((mask >> i) & 1u)) continue;
      const auto& c = data.at(mask, a);
      n += c.n;
      sum += static_cast<double>(c.n) * c.mean;
    }
    if (n < 2) throw UndefinedStatistic(i, population_name(i) + " has fewer than two patients on an arm");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::uint32_t mask = 1; mask <= strata; ++mask) {
      if (!((mask >> i) & 1u)) continue;
      const auto& c = data.at(mask, a);
      if (c.n == 0) continue;
      ss += static_cast<double>(c.n - 1) * c.variance +
            static_cast<double>(c.n) * (c.mean - mean) * (c.mean - mean);
    }
    return ss / static_cast<double>(n - 1);
  };
  for (int i = 0; i < m; ++i) {
    out.treatment_variance.push_back(population_variance(i, counts.treatment_arm(i)));
    out.control_variance.push_back(population_variance(i, kControl));
  }
  return out;
}

std::vector<double> statistics(const DesignModel& model, const SummaryGrid& data) {
  const auto& counts = model.counts;
  const int m = model.m;
  const std::size_t strata = counts.per_stratum().size();

  double pooled_sd = 0.0;
  if (std::holds_alternative<UnknownHomogeneous>(model.regime)) {
    pooled_sd = std::sqrt(pooled_variance(data.all()).variance);
  }
  const UnknownHeterogeneous* het = std::get_if<UnknownHeterogeneous>(&model.regime);
  UnknownHeterogeneous estimated;
  if (het) estimated = estimate_heterogeneous(counts, data);

  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    const Arm t = counts.treatment_arm(i);
    const double nt = static_cast<double>(counts.population_arm(i, t));
    const double nc = static_cast<double>(counts.population_arm(i, kControl));
    double diff = 0.0;
    double vhat = 0.0;
    for (std::uint32_t mask = 1; mask <= strata; ++mask) {
      if (!((mask >> i) & 1u)) continue;
      const auto& ct = data.at(mask, t);
      const auto& cc = data.at(mask, kControl);
      if (ct.n > 0) {
        diff += static_cast<double>(ct.n) / nt * ct.mean;
        if (het) vhat += static_cast<double>(ct.n) / (nt * nt) * estimated.variances.at(mask, t);
      }
      if (cc.n > 0) {
        diff -= static_cast<double>(cc.n) / nc * cc.mean;
        if (het) vhat += static_cast<double>(cc.n) / (nc * nc) * estimated.variances.at(mask, kControl);
      }
    }
    if (het) {
      out[i] = diff / std::sqrt(vhat);
    } else if (std::holds_alternative<UnknownHomogeneous>(model.regime)) {
      out[i] = diff / (pooled_sd * std::sqrt(model.h[i]));
    } else {
      out[i] = diff / std::sqrt(model.variance[i]);
    }
  }
  return out;
}

std::vector<double> noncentrality(const DesignModel& model, const CellGrid& means) {
  const auto& counts = model.counts;
  const std::size_t strata = counts.per_stratum().size();
  std::vector<double> nu(model.m);
  for (int i = 0; i < model.m; ++i) {
    const Arm t = counts.treatment_arm(i);
    const double nt = static_cast<double>(counts.population_arm(i, t));
    const double nc = static_cast<double>(counts.population_arm(i, kControl));
    double diff = 0.0;
    for (std::uint32_t mask = 1; mask <= strata; ++mask) {
      if (!((mask >> i) & 1u)) continue;
      for (Arm a : {t, kControl}) {
        const Count n = counts.cell_mask(mask, a);
        if (n == 0) continue;
        const double mu = means.at(mask, a);
        if (!std::isfinite(mu)) {
          throw ConfigError("missing mean for stratum " + StrataIndex(mask, model.m).to_string() +
                            ", arm " + std::to_string(a));
        }
        diff += (a == kControl ? -1.0 / nc : 1.0 / nt) * static_cast<double>(n) * mu;
      }
    }
    nu[i] = diff / std::sqrt(model.variance[i]);
  }
  return nu;
}

}  // namespace pwer::design

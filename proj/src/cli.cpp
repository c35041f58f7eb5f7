#include "pwer/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "CLI11.hpp"
#include "pwer/control.hpp"
#include "pwer/error.hpp"
#include "pwer/prevalence.hpp"
#include "pwer/report_io.hpp"

namespace pwer::cli {
namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& what) {
  const auto mark = node.Mark();
  if (mark.line >= 0) {
    throw ConfigError("config line " + std::to_string(mark.line + 1) + ": " + what);
  }
  throw ConfigError("config: " + what);
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) {
  if (!map.IsMap()) fail(map, where + " must be a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
T as(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(node, "invalid value for '" + key + "'");
  }
}

template <class T>
T get(const YAML::Node& map, const std::string& key, T fallback) {
  const auto node = map[key];
  if (!node) return fallback;
  return as<T>(node, key);
}

template <class T>
T require(const YAML::Node& map, const std::string& key) {
  const auto node = map[key];
  if (!node) fail(map, "missing required key '" + key + "'");
  return as<T>(node, key);
}

std::uint32_t parse_stratum(const YAML::Node& node, int m) {
  if (!node || !node.IsSequence() || node.size() == 0) {
    fail(node, "stratum must be a nonempty list of population numbers");
  }
  std::uint32_t mask = 0;
  for (const auto& v : node) {
    const int k = as<int>(v, "stratum");
    if (k < 1 || k > m) fail(v, "population " + std::to_string(k) + " outside 1.." + std::to_string(m));
    if (mask & (1u << (k - 1))) fail(v, "population " + std::to_string(k) + " listed twice");
    mask |= 1u << (k - 1);
  }
  return mask;
}

TreatmentStructure parse_structure(const YAML::Node& doc) {
  const auto s = get<std::string>(doc, "structure", "all-different");
  if (s == "all-different") return TreatmentStructure::AllDifferent;
  if (s == "single-treatment") return TreatmentStructure::SingleTreatment;
  fail(doc["structure"], "structure must be all-different or single-treatment");
}

AllocationPolicy parse_allocation(const YAML::Node& doc) {
  const auto s = get<std::string>(doc, "allocation", "stratified");
  if (s == "stratified") return AllocationPolicy::Stratified;
  if (s == "random") return AllocationPolicy::RandomArrival;
  if (s == "pragmatic") return AllocationPolicy::PragmaticArrival;
  fail(doc["allocation"], "allocation must be stratified, random or pragmatic");
}

int parse_m(const YAML::Node& doc) {
  const int m = require<int>(doc, "m");
  if (m < 1 || m > kMaxPopulations) {
    fail(doc["m"], "m must lie in 1.." + std::to_string(kMaxPopulations));
  }
  return m;
}

std::optional<double> parse_pi_min(const YAML::Node& doc) {
  if (!doc["pi_min"]) return std::nullopt;
  return as<double>(doc["pi_min"], "pi_min");
}

sim::Estimator parse_estimator(const YAML::Node& doc) {
  const auto s = get<std::string>(doc, "estimator", "mle");
  if (s == "mle") return sim::Mle{};
  if (s == "marginal") return sim::Marginal{};
  if (s == "mle-min-prevalence") return sim::MleWithMinPrevalence{parse_pi_min(doc)};
  fail(doc["estimator"], "estimator must be mle, marginal or mle-min-prevalence");
}

mvdist::Budget parse_budget(const YAML::Node& doc, mvdist::Budget b) {
  const auto node = doc["integration"];
  if (!node) return b;
  check_keys(node, {"abs_tol", "max_evaluations", "seed", "shifts", "initial_points"}, "integration");
  b.abs_tol = get(node, "abs_tol", b.abs_tol);
  b.max_evaluations = get(node, "max_evaluations", b.max_evaluations);
  b.seed = get(node, "seed", b.seed);
  b.shifts = get(node, "shifts", b.shifts);
  b.initial_points = get(node, "initial_points", b.initial_points);
  if (!(b.abs_tol > 0.0)) fail(node, "abs_tol must be positive");
  if (b.shifts < 2) fail(node, "at least two shifts are required");
  if (b.initial_points < 1 || b.max_evaluations < 1) fail(node, "point budgets must be positive");
  return b;
}

Eigen::MatrixXd parse_matrix(const YAML::Node& node, int m, const std::string& key) {
  if (!node.IsSequence() || static_cast<int>(node.size()) != m) fail(node, key + " must be " + std::to_string(m) + " x " + std::to_string(m));
  Eigen::MatrixXd r(m, m);
  for (int i = 0; i < m; ++i) {
    const auto row = node[i];
    if (!row.IsSequence() || static_cast<int>(row.size()) != m) fail(row, key + " row has the wrong length");
    for (int j = 0; j < m; ++j) r(i, j) = as<double>(row[j], key);
  }
  return r;
}

std::vector<double> parse_vector(const YAML::Node& node, std::size_t n, const std::string& key) {
  if (!node || !node.IsSequence() || node.size() != n) {
    fail(node, key + " must list " + std::to_string(n) + " values");
  }
  std::vector<double> v;
  for (const auto& x : node) v.push_back(as<double>(x, key));
  return v;
}

design::CellGrid parse_effects(const YAML::Node& node, int m, TreatmentStructure structure) {
  if (!node.IsSequence()) fail(node, "effects must be a list of {stratum, arm, mean}");
  const CountTable shape(m, structure);
  design::CellGrid g(m, shape.arm_count(), 0.0);
  for (const auto& e : node) {
    check_keys(e, {"stratum", "arm", "mean"}, "effects entry");
    const auto mask = parse_stratum(e["stratum"], m);
    const int arm = require<int>(e, "arm");
    if (!shape.eligible(StrataIndex(mask, m), arm)) fail(e, "arm " + std::to_string(arm) + " is not eligible in this stratum");
    g.at(mask, arm) = require<double>(e, "mean");
  }
  return g;
}

sim::ScenarioSpec scenario_from(const YAML::Node& doc, const std::set<std::string>& extra_keys) {
  std::set<std::string> allowed = {"m", "N", "replicates", "alpha", "seed", "threads",
                                   "data_replicates", "biomarkers", "dependence", "variance",
                                   "structure", "allocation", "estimator", "pi_min", "effects",
                                   "integration"};
  allowed.insert(extra_keys.begin(), extra_keys.end());
  check_keys(doc, allowed, "scenario");

  sim::ScenarioSpec s;
  s.m = parse_m(doc);
  s.N = require<Count>(doc, "N");
  s.replicates = get(doc, "replicates", s.replicates);
  s.alpha = get(doc, "alpha", s.alpha);
  s.seed = get(doc, "seed", s.seed);
  s.threads = get(doc, "threads", s.threads);
  s.data_replicates = get(doc, "data_replicates", s.data_replicates);
  s.structure = parse_structure(doc);
  s.allocation = parse_allocation(doc);
  s.estimator = parse_estimator(doc);
  s.budget = parse_budget(doc, s.budget);

  if (const auto b = doc["biomarkers"]) {
    check_keys(b, {"mode", "p", "lo", "hi", "value", "stratum"}, "biomarkers");
    const auto mode = get<std::string>(b, "mode", "uniform");
    if (mode == "fixed") {
      s.biomarkers = sim::FixedProbs{parse_vector(b["p"], s.m, "p")};
    } else if (mode == "uniform") {
      s.biomarkers = sim::UniformRandomPerRep{get(b, "lo", 0.0), get(b, "hi", 1.0)};
    } else if (mode == "pinned") {
      sim::OnePrevalencePinned pin;
      pin.value = get(b, "value", pin.value);
      pin.lo = get(b, "lo", pin.lo);
      pin.hi = get(b, "hi", pin.hi);
      if (b["stratum"]) pin.mask = parse_stratum(b["stratum"], s.m);
      s.biomarkers = pin;
    } else {
      fail(b, "biomarker mode must be fixed, uniform or pinned");
    }
  }
  if (const auto d = doc["dependence"]) {
    check_keys(d, {"correlation"}, "dependence");
    s.dependence = GaussianCopula{parse_matrix(d["correlation"], s.m, "correlation")};
  }
  if (const auto v = doc["variance"]) {
    check_keys(v, {"regime", "variance", "lo", "hi"}, "variance");
    const auto regime = get<std::string>(v, "regime", "unknown-homogeneous");
    if (regime == "known-homogeneous") s.variance.kind = sim::VarianceKind::KnownHomogeneous;
    else if (regime == "unknown-homogeneous") s.variance.kind = sim::VarianceKind::UnknownHomogeneous;
    else if (regime == "known-heterogeneous") s.variance.kind = sim::VarianceKind::KnownHeterogeneous;
    else if (regime == "unknown-heterogeneous") s.variance.kind = sim::VarianceKind::UnknownHeterogeneous;
    else fail(v, "unknown variance regime '" + regime + "'");
    s.variance.variance = get(v, "variance", s.variance.variance);
    s.variance.lo = get(v, "lo", s.variance.lo);
    s.variance.hi = get(v, "hi", s.variance.hi);
  }
  if (const auto e = doc["effects"]) s.effects = parse_effects(e, s.m, s.structure);
  return s;
}

YAML::Node load(const std::string& text) {
  try {
    auto doc = YAML::Load(text);
    if (!doc.IsMap()) throw ConfigError("config: top level must be a mapping");
    return doc;
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
}

// Design inputs for the critical and rates commands.
struct DesignInput {
  int m;
  CountTable counts;
  design::DesignModel model;
  PrevalenceVector prev;
  double alpha;
  sim::Estimator estimator;
  mvdist::Budget budget;
};

CountTable parse_counts(const YAML::Node& doc, int m, TreatmentStructure structure, Rng& rng) {
  const auto list = doc["counts"];
  if (!list || !list.IsSequence()) fail(doc, "counts must be a list of {stratum, n, arms}");
  CountTable counts(m, structure);
  bool any_arms = false, all_arms = true;
  std::vector<std::pair<std::uint32_t, YAML::Node>> arm_nodes;
  std::set<std::uint32_t> seen;
  for (const auto& e : list) {
    check_keys(e, {"stratum", "n", "arms"}, "counts entry");
    const auto mask = parse_stratum(e["stratum"], m);
    if (!seen.insert(mask).second) fail(e, "stratum listed twice");
    const StrataIndex j(mask, m);
    Count n = e["n"] ? as<Count>(e["n"], "n") : -1;
    if (const auto arms = e["arms"]) {
      any_arms = true;
      const auto eligible = counts.eligible_arms(j);
      if (!arms.IsSequence() || arms.size() != eligible.size()) {
        fail(arms, "arms must list " + std::to_string(eligible.size()) +
                       " counts (control first, then treatments in population order)");
      }
      Count sum = 0;
      for (const auto& a : arms) sum += as<Count>(a, "arms");
      if (n >= 0 && n != sum) fail(e, "arm counts do not add up to n");
      n = sum;
      arm_nodes.emplace_back(mask, arms);
    } else {
      all_arms = false;
    }
    if (n < 0) fail(e, "counts entry needs n or arms");
    counts.set_stratum(j, n);
  }
  counts.empty_stratum_count = get<Count>(doc, "empty_stratum_count", 0);
  if (any_arms && !all_arms) fail(list, "give arms for every stratum or for none");
  if (!any_arms) return allocate(counts, parse_allocation(doc), rng);
  for (const auto& [mask, arms] : arm_nodes) {
    const StrataIndex j(mask, m);
    const auto eligible = counts.eligible_arms(j);
    for (std::size_t k = 0; k < eligible.size(); ++k) {
      counts.set_cell(j, eligible[k], as<Count>(arms[k], "arms"));
    }
  }
  for (std::uint32_t mask = 1; mask <= strata_count(m); ++mask) {
    if (!seen.count(mask)) {
      for (Arm a = 0; a < counts.arm_count(); ++a) counts.set_cell(StrataIndex(mask, m), a, 0);
    }
  }
  counts.validate();
  return counts;
}

design::VarianceRegime parse_regime(const YAML::Node& doc, const CountTable& counts) {
  const auto v = doc["variance"];
  if (!v) return design::unknown_homogeneous_from_counts(counts);
  check_keys(v, {"regime", "variance", "cells", "treatment_variances", "control_variances"}, "variance");
  const int m = counts.m();
  const auto regime = get<std::string>(v, "regime", "unknown-homogeneous");
  const double common = get(v, "variance", 1.0);
  if (regime == "known-homogeneous") return design::KnownHomogeneous{common};
  if (regime == "unknown-homogeneous") return design::unknown_homogeneous_from_counts(counts, common);
  if (regime != "known-heterogeneous" && regime != "unknown-heterogeneous") {
    fail(v, "unknown variance regime '" + regime + "'");
  }
  design::CellGrid grid(m, counts.arm_count(), common);
  if (const auto cells = v["cells"]) {
    if (!cells.IsSequence()) fail(cells, "cells must be a list of {stratum, arm, variance}");
    for (const auto& c : cells) {
      check_keys(c, {"stratum", "arm", "variance"}, "variance cell");
      const auto mask = parse_stratum(c["stratum"], m);
      const int arm = require<int>(c, "arm");
      if (!counts.eligible(StrataIndex(mask, m), arm)) fail(c, "arm not eligible in this stratum");
      grid.at(mask, arm) = require<double>(c, "variance");
    }
  }
  if (regime == "known-heterogeneous") return design::KnownHeterogeneous{grid};
  design::UnknownHeterogeneous u{grid, parse_vector(v["treatment_variances"], m, "treatment_variances"),
                                 parse_vector(v["control_variances"], m, "control_variances")};
  return u;
}

DesignInput design_from(const YAML::Node& doc, const std::set<std::string>& extra) {
  std::set<std::string> allowed = {"m", "structure", "counts", "allocation", "seed",
                                   "empty_stratum_count", "variance", "alpha", "estimator",
                                   "pi_min", "prevalence", "integration"};
  allowed.insert(extra.begin(), extra.end());
  check_keys(doc, allowed, "config");
  const int m = parse_m(doc);
  const auto structure = parse_structure(doc);
  Rng rng = substream(get<std::uint64_t>(doc, "seed", 1), 0);
  auto counts = parse_counts(doc, m, structure, rng);
  auto regime = parse_regime(doc, counts);
  auto model = design::build_model(counts, regime);
  const auto estimator = parse_estimator(doc);

  std::optional<PrevalenceVector> prev;
  if (const auto p = doc["prevalence"]) {
    if (!p.IsSequence()) fail(p, "prevalence must be a list of {stratum, weight}");
    std::vector<double> w(strata_count(m), 0.0);
    for (const auto& e : p) {
      check_keys(e, {"stratum", "weight"}, "prevalence entry");
      w[parse_stratum(e["stratum"], m) - 1] = require<double>(e, "weight");
    }
    try {
      prev.emplace(m, std::move(w));
    } catch (const ConfigError& err) {
      fail(p, err.what());
    }
  } else if (std::holds_alternative<sim::Marginal>(estimator)) {
    prev = prevalence::marginal(counts).prevalence;
  } else {
    prev = prevalence::mle(counts);
  }
  const double alpha = get(doc, "alpha", 0.025);
  return {m,       counts, std::move(model), *prev, alpha,
          estimator, parse_budget(doc, mvdist::Budget{})};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> threads;
  std::string out;
  std::string dump;
  std::string format = "csv";
};

report::Format format_of(const Options& o) {
  return o.format == "jsonl" ? report::Format::Jsonl : report::Format::Csv;
}

void emit(const Options& o, const std::string& content, std::ostream& out) {
  if (o.out.empty()) {
    out << content;
  } else {
    report::write_atomic(o.out, content);
  }
}

void apply_overrides(sim::ScenarioSpec& s, const Options& o) {
  if (o.seed) s.seed = *o.seed;
  if (o.replicates) s.replicates = *o.replicates;
  if (o.threads) {
    s.threads = *o.threads;
  } else if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    try {
      s.threads = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " must be an integer");
    }
  }
}

void report_failures(const std::map<std::string, int>& failures, int attempted, std::ostream& err) {
  int total = 0;
  for (const auto& [_, n] : failures) total += n;
  if (total == 0) return;
  err << "excluded " << total << " of " << attempted << " replicates:\n";
  for (const auto& [reason, n] : failures) err << "  " << reason << ": " << n << "\n";
}

int cmd_critical(const Options& o, std::ostream& out, std::ostream& err) {
  const auto doc = load(read_file(o.config));
  auto in = design_from(doc, {});
  control::CriticalValueResult res;
  if (std::holds_alternative<design::PerPopulationT>(in.model.df)) {
    if (std::holds_alternative<sim::MleWithMinPrevalence>(in.estimator)) {
      throw ConfigError("the minimal-prevalence estimator is not available with per-population boundaries");
    }
    res = control::solve_per_population(in.prev, in.model, in.alpha, in.budget);
  } else if (const auto* adj = std::get_if<sim::MleWithMinPrevalence>(&in.estimator)) {
    res = control::solve_min_adjusted(in.prev, in.model, in.alpha, adj->pi_min, in.budget);
  } else {
    res = control::solve_equal(in.prev, in.model, in.alpha, in.budget);
  }
  auto rows = report::critical_rows(res);
  if (in.model.approximate) rows.push_back({"approximate", "plug-in correlation, Satterthwaite df", 1.0});
  if (res.boundary.size() == 1) {
    const auto rates = report::rate_rows(control::error_rates(res.c(), in.prev, in.model, in.budget));
    rows.insert(rows.end(), rates.rows.begin(), rates.rows.end());
    if (rates.floored) err << "note: " << rates.floored << " rates below 1e-14 reported as 0\n";
  }
  emit(o, report::report_table(rows, format_of(o)), out);
  return kExitOk;
}

int cmd_rates(const Options& o, std::ostream& out, std::ostream& err) {
  const auto doc = load(read_file(o.config));
  auto in = design_from(doc, {"boundary"});
  const double c = require<double>(doc, "boundary");
  if (std::holds_alternative<design::PerPopulationT>(in.model.df)) {
    throw ConfigError("rates need a regime with a common distribution; the unknown heterogeneous regime has per-population df");
  }
  const auto rates = control::error_rates(c, in.prev, in.model, in.budget);
  auto rr = report::rate_rows(rates);
  std::vector<report::ReportRow> rows = {{"boundary", "", c}};
  rows.insert(rows.end(), rr.rows.begin(), rr.rows.end());
  if (rr.floored) err << "note: " << rr.floored << " rates below 1e-14 reported as 0\n";
  emit(o, report::report_table(rows, format_of(o)), out);
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  auto spec = scenario_from(load(read_file(o.config)), {});
  apply_overrides(spec, o);
  spec.validate();
  const auto res = sim::run_scenario(spec);
  report_failures(res.failures, res.attempted, err);
  if (res.records.empty()) throw DegenerateError("every replicate was excluded");
  std::vector<report::SummaryRow> rows;
  for (auto metric : {sim::Metric::TruePwer, sim::Metric::MaxSwer, sim::Metric::MeanSwer}) {
    rows.push_back({sim::to_string(metric), spec.m, spec.N, sim::summarize(res.records, metric)});
  }
  if (!o.dump.empty()) report::write_atomic(o.dump, report::rep_dump(res.records, format_of(o)));
  emit(o, report::summary_table(rows, format_of(o)), out);
  return kExitOk;
}

int cmd_lfc(const Options& o, std::ostream& out, std::ostream& err) {
  auto spec = scenario_from(load(read_file(o.config)), {});
  apply_overrides(spec, o);
  if (!spec.effects) throw ConfigError("lfc-check needs effects");
  auto null_spec = spec;
  null_spec.effects.reset();
  const auto rep = sim::lfc_check(spec, null_spec);
  report_failures(rep.failures, spec.replicates, err);
  int flagged = 0;
  for (const auto& d : rep.designs) flagged += d.violation ? 1 : 0;
  err << rep.designs.size() << " designs checked, " << flagged << " flagged\n";
  emit(o, report::lfc_table(rep, format_of(o)), out);
  return kExitOk;
}

int cmd_empty(const Options& o, std::ostream& out, std::ostream& err) {
  const auto doc = load(read_file(o.config));
  auto spec = scenario_from(doc, {});
  apply_overrides(spec, o);
  const auto study = sim::empty_stratum_study(spec, parse_pi_min(doc));
  report_failures(study.failures, study.attempted, err);
  err << study.records.size() << " of " << study.attempted
      << " replicates had an unobserved stratum\n";
  std::vector<report::SummaryRow> rows;
  const std::pair<sim::StudyMetric, const char*> metrics[] = {
      {sim::StudyMetric::TruePwer, "true_pwer"},
      {sim::StudyMetric::MaxSwer, "max_swer"},
      {sim::StudyMetric::MeanSwer, "mean_swer"}};
  for (const auto& [metric, name] : metrics) {
    rows.push_back({name, spec.m, spec.N, sim::summarize(study.records, metric, false)});
    rows.push_back({std::string(name) + "_adjusted", spec.m, spec.N,
                    sim::summarize(study.records, metric, true)});
  }
  if (!o.dump.empty()) report::write_atomic(o.dump, report::empty_stratum_dump(study, format_of(o)));
  emit(o, report::summary_table(rows, format_of(o)), out);
  return kExitOk;
}

}  // namespace

sim::ScenarioSpec parse_scenario(const std::string& yaml_text) {
  return scenario_from(load(yaml_text), {});
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Population-wise error rate: critical values, error rates and simulations", "pwer"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  int replicates = 0, threads = 0;

  auto add_common = [&](CLI::App* sub, bool scenario) {
    sub->add_option("--config", o.config, "YAML configuration file")->required();
    sub->add_option("--out", o.out, "Output file (default: standard output)");
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
    if (scenario) {
      sub->add_option("--seed", seed, "Override the scenario seed");
      sub->add_option("--replicates", replicates, "Override the number of replicates")
          ->check(CLI::PositiveNumber);
      sub->add_option("--threads", threads, "Worker threads (0: all cores)")
          ->check(CLI::NonNegativeNumber);
    }
  };
  auto* critical = app.add_subcommand("critical", "Critical value controlling the estimated PWER");
  auto* rates = app.add_subcommand("rates", "PWER and strata-wise FWERs at a given boundary");
  auto* simulate = app.add_subcommand("simulate", "True PWER of estimated boundaries over replicates");
  auto* lfc = app.add_subcommand("lfc-check", "Empirical PWER under effects <= 0 against the null");
  auto* empty = app.add_subcommand("empty-stratum-study", "Boundaries with and without the minimal prevalence");
  add_common(critical, false);
  add_common(rates, false);
  for (auto* sub : {simulate, lfc, empty}) add_common(sub, true);
  for (auto* sub : {simulate, empty}) sub->add_option("--dump", o.dump, "Per-replicate output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  for (auto* sub : app.get_subcommands()) {
    auto given = [sub](const char* name) {
      const auto* opt = sub->get_option_no_throw(name);
      return opt && opt->count() > 0;
    };
    if (given("--seed")) o.seed = seed;
    if (given("--replicates")) o.replicates = replicates;
    if (given("--threads")) o.threads = threads;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    if (sub == critical) return cmd_critical(o, out, err);
    if (sub == rates) return cmd_rates(o, out, err);
    if (sub == simulate) return cmd_simulate(o, out, err);
    if (sub == lfc) return cmd_lfc(o, out, err);
    return cmd_empty(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BudgetExceeded& e) {
    err << "numerical error: " << e.what() << " (best estimate " << e.value << ", error "
        << e.error << ")\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace pwer::cli

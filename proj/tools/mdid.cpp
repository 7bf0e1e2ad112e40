// Command-line front end: one verb per pipeline stage plus simulate and run-all.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdid/errors.hpp"
#include "mdid/io.hpp"
#include "mdid/pipeline.hpp"
#include "mdid/report.hpp"
#include "mdid/synthgen.hpp"

namespace fs = std::filesystem;
using namespace mdid;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kStageFailure = 3 };

// Values given on the command line; each overrides the config file.
struct StudyFlags {
  std::string config_path;
  std::optional<std::vector<int>> pre_period, post_period, baseline_years, pseudo_period;
  std::optional<double> treated_threshold, control_surface_max, control_total_max, caliper, alpha;
  std::optional<std::string> total_scale, outcome;
  bool exclude_border = false;
  bool plain_mahalanobis = false;
  std::optional<std::vector<double>> theta_grid, prevalence, odds_ratio;
  std::optional<std::uint64_t> seed;
};

struct PathFlags {
  std::string counties, covariates, births, sga, out = "mdid_out";
};

void add_study_flags(CLI::App* app, StudyFlags& f) {
  app->add_option("--config", f.config_path, "JSON config file mirroring StudyConfig")->check(CLI::ExistingFile);
  app->add_option("--pre-period", f.pre_period, "first last")->expected(2);
  app->add_option("--post-period", f.post_period, "first last")->expected(2);
  app->add_option("--baseline-years", f.baseline_years, "first last")->expected(2);
  app->add_option("--pseudo-treated-period", f.pseudo_period, "first last")->expected(2);
  app->add_option("--treated-threshold", f.treated_threshold);
  app->add_option("--control-surface-max", f.control_surface_max, "short tons per sq mi");
  app->add_option("--control-total-max", f.control_total_max);
  app->add_option("--total-production-scale", f.total_scale)->check(CLI::IsMember({"raw_tons", "per_sq_mi"}));
  app->add_flag("--exclude-border-controls", f.exclude_border);
  app->add_flag("--plain-mahalanobis", f.plain_mahalanobis);
  app->add_option("--caliper", f.caliper);
  app->add_option("--outcome", f.outcome)->check(CLI::IsMember({"lbw", "vlbw", "preterm", "sga"}));
  app->add_option("--theta-grid", f.theta_grid)->delimiter(',');
  app->add_option("--confounder-prevalence", f.prevalence)->delimiter(',');
  app->add_option("--confounder-odds-ratio", f.odds_ratio)->delimiter(',');
  app->add_option("--alpha", f.alpha);
  app->add_option("--seed", f.seed);
}

void add_path_flags(CLI::App* app, PathFlags& p, bool needs_covariates, bool needs_births) {
  app->add_option("--counties", p.counties, "county panel CSV")->required()->check(CLI::ExistingFile);
  auto* cov = app->add_option("--covariates", p.covariates, "county covariate CSV")->check(CLI::ExistingFile);
  auto* births = app->add_option("--births", p.births, "birth records CSV")->check(CLI::ExistingFile);
  if (needs_covariates) cov->required();
  if (needs_births) births->required();
  app->add_option("--sga-table", p.sga, "SGA 10th percentile CSV")->check(CLI::ExistingFile);
  app->add_option("--out", p.out, "output directory");
}

YearRange to_range(const std::vector<int>& v) { return {v.at(0), v.at(1)}; }

StudyConfig resolve(const StudyFlags& f) {
  StudyConfig cfg = f.config_path.empty() ? StudyConfig{} : io::load_config(f.config_path);
  if (f.pre_period) cfg.pre_period = to_range(*f.pre_period);
  if (f.post_period) cfg.post_period = to_range(*f.post_period);
  if (f.baseline_years) cfg.baseline_years = to_range(*f.baseline_years);
  if (f.pseudo_period) cfg.pseudo_treated_period = to_range(*f.pseudo_period);
  if (f.treated_threshold) cfg.treated_threshold = *f.treated_threshold;
  if (f.control_surface_max) cfg.control_surface_max = *f.control_surface_max;
  if (f.control_total_max) cfg.control_total_max = *f.control_total_max;
  if (f.total_scale) {
    cfg.total_production_scale =
        *f.total_scale == "per_sq_mi" ? TotalProductionScale::per_sq_mi : TotalProductionScale::raw_tons;
  }
  if (f.exclude_border) cfg.exclude_border_controls = true;
  if (f.plain_mahalanobis) cfg.plain_mahalanobis = true;
  if (f.caliper) cfg.caliper = *f.caliper;
  if (f.outcome) cfg.outcome = parse_outcome(*f.outcome);
  if (f.theta_grid) cfg.theta_grid = *f.theta_grid;
  if (f.prevalence) cfg.confounder_prevalence = *f.prevalence;
  if (f.odds_ratio) cfg.confounder_odds_ratio = *f.odds_ratio;
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.seed) cfg.rng_seed = *f.seed;
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

int run_verb(const StudyFlags& flags, const PathFlags& paths, std::set<pipeline::Stage> stages) {
  const StudyConfig cfg = resolve(flags);
  pipeline::RunOptions options;
  options.stages = std::move(stages);
  const auto report = pipeline::run_pipeline(cfg, {paths.counties, paths.covariates, paths.births, paths.sga},
                                             paths.out, options);
  std::cout << "wrote " << report.tables.size() << " tables to " << paths.out << "\n";
  return kOk;
}

struct SimulateFlags {
  synthgen::GeneratorSpec spec;
  std::string true_model = "dose";
  std::optional<double> confounder_prevalence;
  double confounder_or = 1;
  std::string out = "mdid_sim";
};

int simulate(SimulateFlags& f) {
  static const std::map<std::string, synthgen::TrueModel> models{
      {"dose", synthgen::TrueModel::dose}, {"binary", synthgen::TrueModel::binary},
      {"latent", synthgen::TrueModel::latent}};
  f.spec.true_model = models.at(f.true_model);
  if (f.confounder_prevalence) f.spec.planted_confounder = {*f.confounder_prevalence, f.confounder_or};
  const auto study = synthgen::generate_panel(f.spec);
  fs::create_directories(f.out);
  io::write_csv_file(fs::path(f.out) / "counties.csv", io::county_table(study.panels));
  io::write_csv_file(fs::path(f.out) / "covariates.csv", io::census_table(study.census));
  io::write_csv_file(fs::path(f.out) / "births.csv", io::births_table(study.births));
  io::CsvTable truth;
  truth.header = {"county_id", "year", "dose"};
  for (const auto& [key, d] : study.truth.dose) {
    truth.rows.push_back({key.first, std::to_string(key.second), io::exact_number(d)});
  }
  io::write_csv_file(fs::path(f.out) / "truth_dose.csv", truth);
  std::cout << "wrote " << study.panels.size() << " counties and " << study.births.size() << " births to "
            << f.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dose-response difference-in-differences study engine"};
  app.require_subcommand(1);

  struct Verb {
    const char* name;
    const char* help;
    bool covariates;
    bool births;
    std::set<pipeline::Stage> stages;
  };
  using pipeline::Stage;
  const std::vector<Verb> verbs{
      {"cohort", "select treated counties and the control pool", false, false, {Stage::cohort}},
      {"match", "pair treated counties with controls and report balance", true, false, {Stage::match}},
      {"fit", "fit the dose, binary and treated-only models", true, true,
       {Stage::pretrend, Stage::primary, Stage::secondary}},
      {"test-controls", "pre-period pseudo-treatment test", true, true, {Stage::test_of_controls}},
      {"sensitivity", "unmeasured confounder sweep", true, true, {Stage::sensitivity}},
      {"em", "latent exposure EM over the theta grid", true, true, {Stage::theta_grid}},
      {"run-all", "every stage in protocol order", true, true, {}},
  };

  std::vector<StudyFlags> study(verbs.size());
  std::vector<PathFlags> paths(verbs.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    auto* sub = app.add_subcommand(verbs[i].name, verbs[i].help);
    add_study_flags(sub, study[i]);
    add_path_flags(sub, paths[i], verbs[i].covariates, verbs[i].births);
    subs.push_back(sub);
  }

  SimulateFlags sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "write a synthetic study to CSV files");
  simulate_cmd->add_option("--out", sim.out);
  simulate_cmd->add_option("--seed", sim.spec.rng_seed);
  simulate_cmd->add_option("--n-treated", sim.spec.n_treated);
  simulate_cmd->add_option("--n-control", sim.spec.n_control);
  simulate_cmd->add_option("--n-high-production", sim.spec.n_high_production);
  simulate_cmd->add_option("--births-per-cell", sim.spec.births_per_cell);
  simulate_cmd->add_option("--true-model", sim.true_model)->check(CLI::IsMember({"dose", "binary", "latent"}));
  simulate_cmd->add_option("--effect", sim.spec.effect, "log odds ratio of the treatment");
  simulate_cmd->add_option("--theta", sim.spec.theta);
  simulate_cmd->add_option("--dose-min", sim.spec.dose_min);
  simulate_cmd->add_option("--dose-max", sim.spec.dose_max);
  simulate_cmd->add_option("--differential-trend", sim.spec.differential_trend, "log odds per year");
  simulate_cmd->add_option("--covariate-shift", sim.spec.covariate_shift);
  simulate_cmd->add_option("--border-fraction", sim.spec.border_fraction);
  simulate_cmd->add_option("--confounder-prevalence", sim.confounder_prevalence);
  simulate_cmd->add_option("--confounder-odds-ratio", sim.confounder_or);
  simulate_cmd->add_option("--missing-weight-rate", sim.spec.missing_weight_rate);
  simulate_cmd->add_option("--missing-race-rate", sim.spec.missing_race_rate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (simulate_cmd->parsed()) return simulate(sim);
    for (std::size_t i = 0; i < verbs.size(); ++i) {
      if (subs[i]->parsed()) return run_verb(study[i], paths[i], verbs[i].stages);
    }
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  } catch (const ConfigError& e) {
    std::cerr << "error: [config] " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << app.get_subcommands().front()->get_name() << "] " << e.what() << "\n";
    return kStageFailure;
  }
  return kUsage;
}

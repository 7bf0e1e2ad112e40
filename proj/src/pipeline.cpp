#include "mdid/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>

#include "mdid/did.hpp"
#include "mdid/glm.hpp"
#include "mdid/matching.hpp"

namespace mdid::pipeline {

using report::fmt;
using report::RunReport;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::load: return "load";
    case Stage::cohort: return "cohort";
    case Stage::covariates: return "covariates";
    case Stage::match: return "match";
    case Stage::pretrend: return "pretrend";
    case Stage::dose: return "dose";
    case Stage::primary: return "primary";
    case Stage::secondary: return "secondary";
    case Stage::test_of_controls: return "test_of_controls";
    case Stage::sensitivity: return "sensitivity";
    case Stage::theta_grid: return "theta_grid";
  }
  return "unknown";
}

StageError::StageError(Stage stage, const std::string& cause)
    : Error("[" + std::string(to_string(stage)) + "] " + cause), stage_(stage), cause_(cause) {}

StudyData load_inputs(const InputPaths& paths) {
  StudyData d;
  try {
    d.panels = io::load_county_csv(paths.counties);
    if (!paths.covariates.empty()) d.census = io::load_census_csv(paths.covariates);
    if (!paths.births.empty()) {
      auto b = io::load_births_csv(paths.births);
      d.births = std::move(b.births);
      d.missing = std::move(b.tally);
    }
    if (!paths.sga.empty()) d.sga = io::load_sga_csv(paths.sga);
  } catch (const std::exception& e) {
    throw StageError(Stage::load, e.what());
  }
  return d;
}

namespace {

const std::map<Stage, std::vector<Stage>>& prerequisites() {
  static const std::map<Stage, std::vector<Stage>> deps{
      {Stage::load, {}},
      {Stage::cohort, {Stage::load}},
      {Stage::covariates, {Stage::cohort}},
      {Stage::match, {Stage::covariates}},
      {Stage::pretrend, {Stage::match}},
      {Stage::dose, {Stage::match}},
      {Stage::primary, {Stage::dose}},
      {Stage::secondary, {Stage::primary}},
      {Stage::test_of_controls, {Stage::dose}},
      {Stage::sensitivity, {Stage::primary}},
      {Stage::theta_grid, {Stage::secondary}},
  };
  return deps;
}

std::set<Stage> with_prerequisites(const std::set<Stage>& requested) {
  std::set<Stage> out;
  std::function<void(Stage)> visit = [&](Stage s) {
    if (!out.insert(s).second) return;
    for (Stage d : prerequisites().at(s)) visit(d);
  };
  if (requested.empty()) {
    for (const auto& [s, _] : prerequisites()) out.insert(s);
  }
  for (Stage s : requested) visit(s);
  return out;
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }
std::string count(std::size_t n) { return std::to_string(n); }
std::string range(const YearRange& r) { return std::to_string(r.first) + "-" + std::to_string(r.last); }

// Captures warnings for the duration of a run.
class WarningCapture {
 public:
  explicit WarningCapture(std::vector<std::string>& sink)
      : previous_(set_warning_handler([this](const std::string& m) {
          std::lock_guard lock(mutex_);
          messages_.push_back(m);
        })),
        sink_(sink) {}
  ~WarningCapture() {
    set_warning_handler(std::move(previous_));
    std::sort(messages_.begin(), messages_.end());
    sink_ = std::move(messages_);
  }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

 private:
  std::mutex mutex_;
  std::vector<std::string> messages_;
  WarningHandler previous_;
  std::vector<std::string>& sink_;
};

void add_effects(report::Table& t, const did::DidFit& f) {
  const auto& e = f.effect;
  t.add({f.label, e.name, fmt(e.estimate), fmt(e.naive_se), fmt(e.robust_se), fmt(e.statistic), fmt(e.df),
         fmt(e.p_value), fmt(e.odds_ratio), fmt(e.or_ci_low), fmt(e.or_ci_high), fmt(f.fit.n_obs),
         count(static_cast<std::size_t>(f.fit.n_clusters)), count(f.fit.n_dropped_missing),
         std::to_string(f.fit.iterations), yes_no(f.fit.converged)});
}

void add_coefficients(report::Table& t, const did::DidFit& f, double alpha) {
  const auto rows = glm::coefficient_table(f.fit, alpha);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& w = rows[i];
    t.add({f.label, w.name, std::string(to_string(f.fit.blocks[i])), fmt(w.estimate), fmt(w.naive_se),
           fmt(w.robust_se), fmt(w.statistic), fmt(w.p_value), fmt(w.odds_ratio), fmt(w.or_ci_low),
           fmt(w.or_ci_high)});
  }
}

struct Rate {
  double events = 0;
  double births = 0;
};

class Runner {
 public:
  Runner(const StudyConfig& cfg, const StudyData& data, const RunOptions& options)
      : cfg_(cfg), data_(data), options_(options), sga_(data.sga ? &*data.sga : nullptr) {}

  RunReport run() {
    report_.label = cfg_.exclude_border_controls ? "secondary control group" : "primary control group";
    WarningCapture capture(report_.warnings);
    const auto stages = with_prerequisites(options_.stages);
    auto& summary = report_.table("run_summary", {"key", "value"});
    summary.add({"label", report_.label});
    summary.add({"outcome", std::string(to_string(cfg_.outcome))});
    summary.add({"pre_period", range(cfg_.pre_period)});
    summary.add({"analysed_pre_period", range(cfg_.effective_pre_period())});
    summary.add({"post_period", range(cfg_.post_period)});
    summary.add({"alpha", fmt(cfg_.alpha)});
    for (const auto& [stage, _] : prerequisites()) {
      if (!stages.count(stage)) continue;
      try {
        step(stage);
        report_.completed_stages.emplace_back(to_string(stage));
      } catch (const std::exception& e) {
        report_.failed_stage = std::string(to_string(stage));
        report_.failure = e.what();
        break;
      }
    }
    return std::move(report_);
  }

 private:
  report::Table& summary() { return report_.tables.front(); }

  void step(Stage s) {
    switch (s) {
      case Stage::load: return load();
      case Stage::cohort: return cohort();
      case Stage::covariates: return covariates();
      case Stage::match: return match();
      case Stage::pretrend: return pretrend();
      case Stage::dose: return dose();
      case Stage::primary: return primary();
      case Stage::secondary: return secondary();
      case Stage::test_of_controls: return test_controls();
      case Stage::sensitivity: return sensitivity();
      case Stage::theta_grid: return theta_grid();
    }
  }

  void load() {
    cfg_.validate();
    if (data_.panels.empty()) throw DataError("no county panels");
    if (cfg_.outcome == Outcome::sga && !sga_) throw ConfigError("outcome sga requires an SGA reference table");
    auto& t = report_.table("missing_counts", {"variable", "missing", "rows"});
    for (const auto& [column, n] : data_.missing.missing) t.add({column, count(n), count(data_.missing.rows)});
  }

  void cohort() {
    const auto treated = cohort::select_treated(data_.panels, cfg_);
    cohort_ = cohort::select_controls(data_.panels, cfg_, treated);
    auto& t = report_.table("cohort", {"county_id", "state", "status", "reason"});
    std::map<CountyId, State> state;
    for (const auto& p : data_.panels) state[p.county_id] = p.state;
    std::map<CountyId, std::pair<std::string, std::string>> rows;
    for (const auto& id : cohort_.treated) rows[id] = {"treated", ""};
    for (const auto& id : cohort_.control_pool) rows[id] = {"control_pool", ""};
    for (const auto& [id, why] : cohort_.excluded) rows[id] = {"excluded", std::string(to_string(why))};
    for (const auto& [id, r] : rows) t.add({id, std::string(to_string(state.at(id))), r.first, r.second});
    summary().add({"n_counties", count(cohort_.size())});
    summary().add({"n_treated", count(cohort_.treated.size())});
    summary().add({"n_control_pool", count(cohort_.control_pool.size())});
    summary().add({"n_excluded", count(cohort_.excluded.size())});
    if (cohort_.treated.empty()) throw DataError("no treated counties");
  }

  void covariates() {
    std::map<CountyId, const cohort::CountyCensusInputs*> by_id;
    for (const auto& c : data_.census) by_id[c.county_id] = &c;
    std::map<CountyId, CovariateVector> cov;
    for (const auto* ids : {&cohort_.treated, &cohort_.control_pool}) {
      for (const auto& id : *ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("no covariate row for county " + id);
        cov[id] = cohort::aggregate_covariates(*it->second);
      }
    }
    covariates_ = matching::CovariateTable::from(cov);
    auto columns = std::vector<std::string>{"county_id"};
    columns.insert(columns.end(), covariates_.names.begin(), covariates_.names.end());
    auto& t = report_.table("covariates", columns);
    for (const auto& [id, v] : covariates_.rows) {
      std::vector<std::string> row{id};
      for (Eigen::Index k = 0; k < v.size(); ++k) row.push_back(fmt(v(k)));
      t.add(std::move(row));
    }
  }

  void match() {
    matching::MatchOptions opt;
    opt.kind = cfg_.plain_mahalanobis ? matching::DistanceKind::mahalanobis
                                      : matching::DistanceKind::rank_mahalanobis;
    opt.caliper = cfg_.caliper;
    match_ = matching::match_counties(covariates_, cohort_.treated, cohort_.control_pool, opt);
    auto& b = report_.table("balance", {"covariate", "treated_mean", "matched_control_mean", "all_control_mean",
                                        "smd_matched", "smd_all_controls"});
    for (std::size_t k = 0; k < match_.covariate_names.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      b.add({match_.covariate_names[k], fmt(match_.treated_mean(i)), fmt(match_.matched_mean(i)),
             fmt(match_.pool_mean(i)), fmt(match_.smd_after(i)), fmt(match_.smd_before(i))});
    }
    const auto dist = matching::distance_matrix(covariates_, cohort_.treated, cohort_.control_pool, opt.kind);
    std::map<CountyId, Eigen::Index> col;
    for (std::size_t j = 0; j < cohort_.control_pool.size(); ++j) {
      col[cohort_.control_pool[j]] = static_cast<Eigen::Index>(j);
    }
    auto& p = report_.table("pairs", {"pair", "treated", "control", "distance"});
    for (std::size_t i = 0; i < match_.pairs.size(); ++i) {
      const auto& [t, c] = match_.pairs[i];
      p.add({std::to_string(i + 1), t, c, fmt(dist(static_cast<Eigen::Index>(i), col.at(c)))});
      matched_controls_.push_back(c);
    }
    std::sort(matched_controls_.begin(), matched_controls_.end());
    summary().add({"n_pairs", count(match_.pairs.size())});
    summary().add({"total_match_distance", fmt(match_.total_distance)});
  }

  void pretrend() {
    const YearRange pre = cfg_.effective_pre_period();
    std::map<CountyId, Rate> by_county;
    std::map<std::pair<int, int>, Rate> by_year;  // (year, 0 treated / 1 control)
    std::map<CountyId, int> group;
    for (const auto& [t, c] : match_.pairs) {
      group[t] = 0;
      group[c] = 1;
    }
    for (const auto& b : data_.births) {
      auto g = group.find(b.county_id);
      if (g == group.end() || !pre.contains(b.year)) continue;
      const auto y = derive_outcome(b, cfg_.outcome, sga_);
      if (!y) continue;
      auto& rc = by_county[b.county_id];
      auto& ry = by_year[{b.year, g->second}];
      rc.events += *y;
      rc.births += 1;
      ry.events += *y;
      ry.births += 1;
    }
    std::vector<double> treated_rate, control_rate;
    auto rate_of = [&](const CountyId& id) {
      const auto it = by_county.find(id);
      if (it == by_county.end() || it->second.births == 0) {
        throw DataError("no pre-period births with a known outcome for county " + id);
      }
      return it->second.events / it->second.births;
    };
    for (const auto& [t, c] : match_.pairs) {
      treated_rate.push_back(rate_of(t));
      control_rate.push_back(rate_of(c));
    }
    auto& s = report_.table("plot_pretrend", {"year", "group", "events", "births", "rate"});
    for (const auto& [key, r] : by_year) {
      s.add({std::to_string(key.first), key.second == 0 ? "treated" : "matched_control", fmt(r.events),
             fmt(r.births), fmt(r.births > 0 ? r.events / r.births : 0.0)});
    }
    const auto tt = glm::paired_t_test(treated_rate, control_rate);
    auto& t = report_.table("pretrend_ttest", {"period", "n_pairs", "mean_diff", "t", "df", "p_value",
                                               "ci_low", "ci_high"});
    t.add({range(pre), count(treated_rate.size()), fmt(tt.mean_diff), fmt(tt.t), fmt(tt.df), fmt(tt.p_value),
           fmt(tt.ci_low), fmt(tt.ci_high)});
  }

  void dose() {
    dose_ = did::compute_doses(data_.panels, cohort_.treated, matched_controls_, cfg_);
    dose_.validate(cfg_);
    auto& t = report_.table("plot_dose", {"county_id", "year", "dose", "treated_post"});
    for (const auto& [key, cell] : dose_.cells) {
      if (!dose_.counties.at(key.first) || !cfg_.post_period.contains(key.second)) continue;
      t.add({key.first, std::to_string(key.second), fmt(cell.dose), cell.treated_post ? "1" : "0"});
    }
  }

  report::Table& effects() {
    for (auto& t : report_.tables) {
      if (t.name == "effects") return t;
    }
    return report_.table("effects", {"model", "term", "estimate", "naive_se", "robust_se", "statistic", "df",
                                     "p_value", "odds_ratio", "or_ci_low", "or_ci_high", "n_obs", "n_clusters",
                                     "n_dropped_missing", "iterations", "converged"});
  }

  report::Table& coefficients() {
    for (auto& t : report_.tables) {
      if (t.name == "coefficients") return t;
    }
    return report_.table("coefficients", {"model", "term", "block", "estimate", "naive_se", "robust_se",
                                          "statistic", "p_value", "odds_ratio", "or_ci_low", "or_ci_high"});
  }

  void record(const did::DidFit& f) {
    add_effects(effects(), f);
    add_coefficients(coefficients(), f, cfg_.alpha);
  }

  void primary() {
    primary_ = did::fit_primary_dose_model(data_.births, dose_, cfg_, sga_);
    record(*primary_);
  }

  void secondary() {
    binary_ = did::fit_secondary_binary_model(data_.births, dose_, cfg_, sga_);
    record(*binary_);
    record(did::fit_treated_only_model(data_.births, dose_, cfg_, sga_));
  }

  void test_controls() { record(did::test_of_controls(data_.births, dose_, cfg_, sga_)); }

  void sensitivity() {
    const auto grid = sensitivity::confounder_grid(cfg_.confounder_prevalence, cfg_.confounder_odds_ratio);
    const auto sweep = sensitivity::confounder_sweep(*primary_, grid, cfg_.alpha, options_.em);
    summary().add({"sensitivity_status", sweep.skipped ? "skipped: " + sweep.skip_reason : "run"});
    if (sweep.skipped) return;
    auto& t = report_.table("sensitivity", {"prevalence", "odds_ratio", "estimate", "se", "statistic",
                                            "p_value", "significant", "em_iterations"});
    for (const auto& r : sweep.results) {
      t.add({fmt(r.spec.prevalence), fmt(r.spec.outcome_or), fmt(r.estimate), fmt(r.se), fmt(r.statistic),
             fmt(r.p_value), yes_no(r.significant), std::to_string(r.em_iterations)});
    }
    auto& f = report_.table("sensitivity_frontier", {"prevalence", "odds_ratio_losing_significance"});
    for (const auto& p : sweep.frontier) {
      f.add({fmt(p.prevalence), p.odds_ratio ? fmt(*p.odds_ratio) : "none in grid"});
    }
  }

  void theta_grid() {
    const auto inputs = sensitivity::prepare_latent_exposure(*primary_, *binary_, data_.births, dose_, cfg_, sga_);
    const auto fits = sensitivity::theta_grid_report(inputs, cfg_.theta_grid, options_.em);
    auto& t = report_.table("theta_grid", {"theta", "tau", "exp_tau", "naive_se", "adjusted_se", "design_effect",
                                           "tau_ci_low", "tau_ci_high", "em_iterations", "converged"});
    for (const auto& f : fits) {
      t.add({fmt(f.theta), fmt(f.tau), fmt(f.odds_ratio), fmt(f.tau_naive_se), fmt(f.tau_se),
             fmt(f.design_effect), fmt(f.ci_low), fmt(f.ci_high), std::to_string(f.em_iterations),
             yes_no(f.converged)});
    }
  }

  const StudyConfig& cfg_;
  const StudyData& data_;
  const RunOptions& options_;
  const SgaTable* sga_;
  RunReport report_;

  cohort::CohortAssignment cohort_;
  matching::CovariateTable covariates_;
  matching::MatchResult match_;
  std::vector<CountyId> matched_controls_;
  did::DoseAssignment dose_;
  std::optional<did::DidFit> primary_;
  std::optional<did::DidFit> binary_;
};

}  // namespace

RunReport run_stages(const StudyConfig& cfg, const StudyData& data, const RunOptions& options) {
  return Runner(cfg, data, options).run();
}

RunReport run_pipeline(const StudyConfig& cfg, const InputPaths& paths, const std::filesystem::path& out_dir,
                       const RunOptions& options) {
  StudyData data;
  try {
    data = load_inputs(paths);
  } catch (const StageError& e) {
    RunReport partial;
    partial.label = cfg.exclude_border_controls ? "secondary control group" : "primary control group";
    partial.failed_stage = "load";
    partial.failure = e.cause();
    report::write_report(partial, out_dir);
    throw;
  }
  RunReport report = run_stages(cfg, data, options);
  report::write_report(report, out_dir);
  if (!report.complete()) {
    Stage failed = Stage::load;
    for (const auto& [s, _] : prerequisites()) {
      if (to_string(s) == report.failed_stage) failed = s;
    }
    throw StageError(failed, report.failure);
  }
  return report;
}

}  // namespace mdid::pipeline

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdid/io.hpp"
#include "mdid/pipeline.hpp"
#include "mdid/synthgen.hpp"

using namespace mdid;
using namespace mdid::pipeline;
namespace fs = std::filesystem;

namespace {

StudyConfig short_config() {
  StudyConfig cfg;
  cfg.pre_period = {1985, 1989};
  cfg.baseline_years = {1987, 1989};
  cfg.pseudo_treated_period = {1988, 1989};
  cfg.post_period = {1999, 2003};
  cfg.theta_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return cfg;
}

StudyData simulated(double effect, std::uint64_t seed = 11) {
  synthgen::GeneratorSpec s;
  s.n_treated = 6;
  s.n_control = 10;
  s.pre_period = {1985, 1989};
  s.baseline_years = {1987, 1989};
  s.post_period = {1999, 2003};
  s.births_per_cell = 150;
  s.effect = effect;
  s.rng_seed = seed;
  s.dose_max = 0.09;
  auto st = synthgen::generate_panel(s);
  StudyData d;
  d.panels = std::move(st.panels);
  d.census = std::move(st.census);
  d.births = std::move(st.births);
  d.missing.rows = d.births.size();
  return d;
}

std::string value(const report::RunReport& r, const std::string& key) {
  for (const auto& row : r.find("run_summary")->rows) {
    if (row[0] == key) return row[1];
  }
  return "<absent>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Pipeline, StrongEffectCompletesEveryStage) {
  const auto cfg = short_config();
  const auto r = run_stages(cfg, simulated(8.0));
  ASSERT_TRUE(r.complete()) << r.failed_stage << ": " << r.failure;
  EXPECT_EQ(r.completed_stages.size(), 11u);
  EXPECT_EQ(r.label, "primary control group");
  EXPECT_EQ(value(r, "n_pairs"), "6");
  EXPECT_EQ(value(r, "sensitivity_status"), "run");
  ASSERT_NE(r.find("theta_grid"), nullptr);
  EXPECT_EQ(r.find("theta_grid")->rows.size(), 10u);
  ASSERT_NE(r.find("effects"), nullptr);
  std::set<std::string> models;
  for (const auto& row : r.find("effects")->rows) models.insert(row[0]);
  EXPECT_EQ(models, (std::set<std::string>{"primary_dose", "secondary_binary", "treated_only_dose",
                                           "test_of_controls"}));
  EXPECT_EQ(r.find("pretrend_ttest")->rows.front()[4], "5");  // df = pairs - 1
}

TEST(Pipeline, NullEffectSkipsSensitivity) {
  auto cfg = short_config();
  cfg.alpha = 1e-6;
  const auto r = run_stages(cfg, simulated(0.0));
  ASSERT_TRUE(r.complete()) << r.failure;
  EXPECT_EQ(value(r, "sensitivity_status"), "skipped: primary not significant");
  EXPECT_TRUE(r.find("sensitivity") == nullptr || r.find("sensitivity")->rows.empty());
}

TEST(Pipeline, BorderExclusionChangesLabel) {
  auto cfg = short_config();
  cfg.exclude_border_controls = true;
  RunOptions opt;
  opt.stages = {Stage::match};
  const auto r = run_stages(cfg, simulated(0.0));
  EXPECT_EQ(r.label, "secondary control group");
  const auto rr = run_stages(cfg, simulated(0.0), opt);
  EXPECT_EQ(rr.completed_stages, (std::vector<std::string>{"load", "cohort", "covariates", "match"}));
}

TEST(Pipeline, StageFailureLeavesPartialReport) {
  const auto cfg = short_config();
  auto data = simulated(0.0);
  data.census.clear();
  const auto r = run_stages(cfg, data);
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(r.failed_stage, "covariates");
  EXPECT_EQ(r.completed_stages, (std::vector<std::string>{"load", "cohort"}));
  EXPECT_NE(r.find("cohort"), nullptr);
}

TEST(Pipeline, FilesRunIsDeterministicAndReportsFailures) {
  const auto cfg = short_config();
  const auto data = simulated(8.0, 3);
  const auto dir = fs::temp_directory_path() / "mdid_test_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir / "in");
  io::write_csv_file(dir / "in/counties.csv", io::county_table(data.panels));
  io::write_csv_file(dir / "in/covariates.csv", io::census_table(data.census));
  io::write_csv_file(dir / "in/births.csv", io::births_table(data.births));
  InputPaths paths{dir / "in/counties.csv", dir / "in/covariates.csv", dir / "in/births.csv", {}};
  run_pipeline(cfg, paths, dir / "a");
  run_pipeline(cfg, paths, dir / "b");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "a")) names.push_back(e.path().filename().string());
  ASSERT_GT(names.size(), 5u);
  for (const auto& n : names) EXPECT_EQ(slurp(dir / "a" / n), slurp(dir / "b" / n)) << n;

  paths.covariates = dir / "in/nope.csv";
  try {
    run_pipeline(cfg, paths, dir / "c");
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::load);
    EXPECT_EQ(std::string(e.what()).rfind("[load]", 0), 0u);
  }
  EXPECT_EQ(slurp(dir / "c/MANIFEST").rfind("status: failed", 0), 0u);
  fs::remove_all(dir);
}

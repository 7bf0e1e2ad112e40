#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/cohort.hpp"
#include "mdid/core_data.hpp"
#include "mdid/errors.hpp"
#include "mdid/io.hpp"
#include "mdid/report.hpp"
#include "mdid/sensitivity.hpp"

namespace mdid::pipeline {

enum class Stage {
  load,
  cohort,
  covariates,
  match,
  pretrend,
  dose,
  primary,
  secondary,
  test_of_controls,
  sensitivity,
  theta_grid,
};

std::string_view to_string(Stage s);

// Error raised by a pipeline stage; what() reads "[stage] cause".
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& cause);
  Stage stage() const { return stage_; }
  const std::string& cause() const { return cause_; }

 private:
  Stage stage_;
  std::string cause_;
};

struct InputPaths {
  std::filesystem::path counties;
  std::filesystem::path covariates;  // optional unless matching runs
  std::filesystem::path births;      // optional unless a births stage runs
  std::filesystem::path sga;         // optional; required for outcome = sga
};

struct StudyData {
  std::vector<CountyPanel> panels;
  std::vector<cohort::CountyCensusInputs> census;
  std::vector<BirthRecord> births;
  io::MissingTally missing;
  std::optional<SgaTable> sga;
};

struct RunOptions {
  // Stages to run; prerequisites are added automatically. Empty means all.
  std::set<Stage> stages;
  sensitivity::MixtureOptions em;
};

// Reads every input named in `paths`.
StudyData load_inputs(const InputPaths& paths);

// Runs the requested stages in protocol order and returns the report.
// On a stage failure the partial report is returned with failed_stage set.
report::RunReport run_stages(const StudyConfig& cfg, const StudyData& data, const RunOptions& options = {});

// Loads, runs and writes the report to out_dir. A failure still writes the
// partial report and MANIFEST, then throws StageError.
report::RunReport run_pipeline(const StudyConfig& cfg, const InputPaths& paths,
                               const std::filesystem::path& out_dir, const RunOptions& options = {});

}  // namespace mdid::pipeline

#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdid/core_data.hpp"
#include "mdid/design.hpp"
#include "mdid/glm.hpp"

namespace mdid::did {

struct DoseCell {
  double dose = 0;           // D_it
  bool treated_post = false; // T_it
};

// Dose and treatment indicator for every analysis county over the pre and
// post periods. Cells not stored are zero.
struct DoseAssignment {
  std::map<CountyId, bool> counties;  // analysis county -> is treated
  std::map<std::pair<CountyId, int>, DoseCell> cells;

  DoseCell at(const CountyId& county, int year) const;
  // Throws ValidationError if an invariant fails (pre-period dose, control
  // dose, negative dose, T outside treated post cells).
  void validate(const StudyConfig& cfg) const;
};

// Year -> D for one county over the pre and post periods. Treated post years
// get max(disturbed[t] - baseline mean, 0); everything else is 0. Throws
// DataError naming missing years for a treated county.
std::map<int, double> compute_dose(const CountyPanel& panel, bool treated, const StudyConfig& cfg);

DoseAssignment compute_doses(std::span<const CountyPanel> panels,
                             std::span<const CountyId> treated,
                             std::span<const CountyId> controls, const StudyConfig& cfg);

enum class TreatmentTerm {
  dose,        // chi * D_it
  binary,      // beta * T_it
  pseudo,      // treated county and year in the pseudo-treated period
  none,        // fixed effects and individual covariates only
};

struct DesignOptions {
  TreatmentTerm term = TreatmentTerm::dose;
  bool treated_only = false;
  bool pre_period_only = false;
};

// Model matrix plus the per-row quantities later stages need.
struct AnalysisData {
  glm::DesignMatrix design;
  std::size_t n_dropped_missing = 0;
  int treatment_column = -1;
  std::vector<double> dose;          // D_it per row
  std::vector<char> treated_post;    // T_it per row
};

// Builds the logistic design: intercept, county dummies (first county
// alphabetically omitted), year dummies (first year omitted), individual
// covariate dummies and the treatment column. Births sharing county, year,
// covariates and outcome are collapsed into one frequency-weighted row.
// Rows with a missing outcome or covariate are dropped and counted.
AnalysisData build_design(std::span<const BirthRecord> births, const DoseAssignment& dose,
                          const StudyConfig& cfg, const DesignOptions& options,
                          const SgaTable* sga_table = nullptr);

struct DidFit {
  std::string label;
  FitResult fit;
  glm::WaldSummary effect;
  AnalysisData data;
};

// logit Pr(Y=1) = county + year + covariates + chi * D.
DidFit fit_primary_dose_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                              const StudyConfig& cfg, const SgaTable* sga_table = nullptr);
// Same model with beta * T in place of the dose.
DidFit fit_secondary_binary_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                                  const StudyConfig& cfg, const SgaTable* sga_table = nullptr);
// Dose model on treated counties only.
DidFit fit_treated_only_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                              const StudyConfig& cfg, const SgaTable* sga_table = nullptr);
// Pre-period binary model with the pseudo-treated years as "treatment".
DidFit test_of_controls(std::span<const BirthRecord> births, const DoseAssignment& dose,
                        const StudyConfig& cfg, const SgaTable* sga_table = nullptr);

DidFit fit_model(std::string label, std::span<const BirthRecord> births, const DoseAssignment& dose,
                 const StudyConfig& cfg, const DesignOptions& options,
                 const SgaTable* sga_table = nullptr);

}  // namespace mdid::did

#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/core_data.hpp"

namespace mdid::cohort {

enum class ExclusionReason {
  treated,
  high_surface_production,
  high_total_production,
  outside_region,
  border_excluded,
};

std::string_view to_string(ExclusionReason r);

struct CohortAssignment {
  std::vector<CountyId> treated;       // sorted
  std::vector<CountyId> control_pool;  // sorted
  std::map<CountyId, ExclusionReason> excluded;

  std::size_t size() const { return treated.size() + control_pool.size() + excluded.size(); }
};

// Average years of schooling implied by the four attainment shares
// (weights 10, 12, 14, 16). Shares must each lie in [0,1] and sum to 1.
double education_index(double pct_lt_hs, double pct_hs, double pct_some_college,
                       double pct_college);

// True when the panel has no disturbed-area series at all, i.e. the county is
// outside the mapped coal-field region.
bool outside_disturbed_region(const CountyPanel& panel);

// Counties whose post-period mean disturbed fraction exceeds the threshold and
// the baseline mean. Panels without any disturbed-area data are skipped; a
// panel with partial gaps raises DataError listing the missing years.
std::set<CountyId> select_treated(std::span<const CountyPanel> panels, const StudyConfig& cfg);

// Partitions every non-treated county into the control pool or an exclusion.
// Treated counties go to `treated` and are never tested against the control
// criteria.
CohortAssignment select_controls(std::span<const CountyPanel> panels, const StudyConfig& cfg,
                                 const std::set<CountyId>& treated);

struct EducationShares {
  double lt_hs = 0;
  double hs = 0;
  double some_college = 0;
  double college = 0;
};

// Raw census and vital-statistics inputs for one county. Any missing field
// makes aggregate_covariates fail with the field and county named.
struct CountyCensusInputs {
  CountyId county_id;
  std::optional<double> income_1979;
  std::optional<double> income_1989;
  std::optional<double> income_1999;
  std::optional<double> income_2011;
  std::optional<double> poverty_1980;
  std::optional<double> poverty_1990;
  std::optional<double> poverty_2000;
  std::optional<double> poverty_2010;
  std::optional<double> percent_white_1990;
  std::optional<EducationShares> education_1980;
  std::optional<EducationShares> education_1990;
  std::optional<EducationShares> education_2000;
  std::optional<EducationShares> education_2012_2016;
  std::optional<double> smoking_births_1989_2003;
  std::optional<double> known_smoking_births_1989_2003;
};

CovariateVector aggregate_covariates(const CountyCensusInputs& in);

}  // namespace mdid::cohort

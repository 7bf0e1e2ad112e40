#include "mdid/cohort.hpp"

#include <algorithm>
#include <cmath>

#include "mdid/errors.hpp"

namespace mdid::cohort {

namespace {

struct MeanOverYears {
  double mean = 0;
  std::vector<int> missing;
};

MeanOverYears mean_over(const std::map<int, double>& series, const YearRange& years) {
  MeanOverYears out;
  double sum = 0;
  for (int y = years.first; y <= years.last; ++y) {
    auto it = series.find(y);
    if (it == series.end()) {
      out.missing.push_back(y);
    } else {
      sum += it->second;
    }
  }
  out.mean = sum / years.size();
  return out;
}

std::string join_years(const std::vector<int>& years) {
  std::string s;
  for (int y : years) {
    if (!s.empty()) s += ',';
    s += std::to_string(y);
  }
  return s;
}

double require(const std::optional<double>& v, std::string_view field, const CountyId& county) {
  if (!v) {
    throw DataError("county " + county + ": missing " + std::string(field));
  }
  return *v;
}

double education_of(const std::optional<EducationShares>& e, std::string_view field,
                    const CountyId& county) {
  if (!e) throw DataError("county " + county + ": missing " + std::string(field));
  return education_index(e->lt_hs, e->hs, e->some_college, e->college);
}

}  // namespace

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::treated: return "treated";
    case ExclusionReason::high_surface_production: return "high_surface_production";
    case ExclusionReason::high_total_production: return "high_total_production";
    case ExclusionReason::outside_region: return "outside_region";
    case ExclusionReason::border_excluded: return "border_excluded";
  }
  return "?";
}

double education_index(double pct_lt_hs, double pct_hs, double pct_some_college,
                       double pct_college) {
  for (double f : {pct_lt_hs, pct_hs, pct_some_college, pct_college}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ValidationError("education share outside [0,1]");
    }
  }
  const double total = pct_lt_hs + pct_hs + pct_some_college + pct_college;
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError("education shares sum to " + std::to_string(total) + ", expected 1");
  }
  return 10.0 * pct_lt_hs + 12.0 * pct_hs + 14.0 * pct_some_college + 16.0 * pct_college;
}

bool outside_disturbed_region(const CountyPanel& panel) { return panel.disturbed_frac.empty(); }

std::set<CountyId> select_treated(std::span<const CountyPanel> panels, const StudyConfig& cfg) {
  std::set<CountyId> treated;
  std::string gaps;
  for (const auto& panel : panels) {
    if (outside_disturbed_region(panel)) continue;
    const auto post = mean_over(panel.disturbed_frac, cfg.post_period);
    const auto base = mean_over(panel.disturbed_frac, cfg.baseline_years);
    if (!post.missing.empty() || !base.missing.empty()) {
      std::vector<int> missing = post.missing;
      missing.insert(missing.end(), base.missing.begin(), base.missing.end());
      gaps += (gaps.empty() ? "" : "; ") + panel.county_id + ": " + join_years(missing);
      continue;
    }
    if (post.mean > cfg.treated_threshold && post.mean > base.mean) {
      treated.insert(panel.county_id);
    }
  }
  if (!gaps.empty()) {
    throw DataError("missing disturbed-area years: " + gaps);
  }
  return treated;
}

CohortAssignment select_controls(std::span<const CountyPanel> panels, const StudyConfig& cfg,
                                 const std::set<CountyId>& treated) {
  CohortAssignment out;
  for (const auto& panel : panels) {
    const auto& id = panel.county_id;
    if (treated.contains(id)) {
      out.treated.push_back(id);
      continue;
    }
    if (outside_disturbed_region(panel)) {
      out.excluded[id] = ExclusionReason::outside_region;
      continue;
    }
    const auto surface = mean_over(panel.surface_production, cfg.post_period);
    const auto total = mean_over(panel.total_production, cfg.post_period);
    if (!surface.missing.empty() || !total.missing.empty()) {
      throw DataError("county " + id + ": missing production years " +
                      join_years(surface.missing.empty() ? total.missing : surface.missing));
    }
    // Mean of per-square-mile yearly values equals the mean tonnage over area.
    const double surface_per_sq_mi = surface.mean / panel.area_sq_mi;
    const double total_measure = cfg.total_production_scale == TotalProductionScale::per_sq_mi
                                     ? total.mean / panel.area_sq_mi
                                     : total.mean;
    if (!(surface_per_sq_mi < cfg.control_surface_max)) {
      out.excluded[id] = ExclusionReason::high_surface_production;
    } else if (!(total_measure < cfg.control_total_max)) {
      out.excluded[id] = ExclusionReason::high_total_production;
    } else if (cfg.exclude_border_controls && panel.borders_treated) {
      out.excluded[id] = ExclusionReason::border_excluded;
    } else {
      out.control_pool.push_back(id);
    }
  }
  std::sort(out.treated.begin(), out.treated.end());
  std::sort(out.control_pool.begin(), out.control_pool.end());
  return out;
}

CovariateVector aggregate_covariates(const CountyCensusInputs& in) {
  const auto& id = in.county_id;
  CovariateVector cv;
  cv.median_income_pre =
      0.5 * (require(in.income_1979, "income_1979", id) + require(in.income_1989, "income_1989", id));
  cv.median_income_post =
      0.5 * (require(in.income_1999, "income_1999", id) + require(in.income_2011, "income_2011", id));
  cv.poverty_pre = 0.5 * (require(in.poverty_1980, "poverty_1980", id) +
                          require(in.poverty_1990, "poverty_1990", id));
  cv.poverty_post = 0.5 * (require(in.poverty_2000, "poverty_2000", id) +
                           require(in.poverty_2010, "poverty_2010", id));
  cv.percent_white = require(in.percent_white_1990, "percent_white_1990", id);
  cv.education_pre = 0.5 * (education_of(in.education_1980, "education_1980", id) +
                            education_of(in.education_1990, "education_1990", id));
  cv.education_post = 0.5 * (education_of(in.education_2000, "education_2000", id) +
                             education_of(in.education_2012_2016, "education_2012_2016", id));
  const double smokers = require(in.smoking_births_1989_2003, "smoking_births_1989_2003", id);
  const double known =
      require(in.known_smoking_births_1989_2003, "known_smoking_births_1989_2003", id);
  if (!(known > 0) || smokers < 0 || smokers > known) {
    throw DataError("county " + id + ": smoking counts must satisfy 0 <= smoking <= known, known > 0");
  }
  cv.maternal_smoking_rate = smokers / known;
  cv.validate();
  return cv;
}

}  // namespace mdid::cohort

#include "mdid/did.hpp"

#include <algorithm>
#include <array>
#include <compare>
#include <set>

#include "mdid/errors.hpp"

namespace mdid::did {

namespace {

struct CellKey {
  int county = 0;
  int year = 0;
  int race = 0;
  int age = 0;
  int sex = 0;
  int plurality = 0;
  int y = 0;
  auto operator<=>(const CellKey&) const = default;
};

// Dummy coding for one categorical covariate: a column per present level
// except the reference.
struct LevelColumns {
  std::array<int, 8> column{-1, -1, -1, -1, -1, -1, -1, -1};
};

template <typename Enum, std::size_t N>
LevelColumns add_level_columns(glm::DesignMatrix& d, const std::string& prefix,
                               const std::array<Enum, N>& levels, const std::set<int>& present,
                               Enum preferred_reference) {
  LevelColumns out;
  int reference = static_cast<int>(preferred_reference);
  if (!present.contains(reference) && !present.empty()) reference = *present.begin();
  for (Enum level : levels) {
    const int code = static_cast<int>(level);
    if (code == reference || !present.contains(code)) continue;
    out.column[static_cast<std::size_t>(code)] =
        d.add_column(prefix + "=" + std::string(to_string(level)), ColumnBlock::individual);
  }
  return out;
}

constexpr std::array<Race, 3> kRaces{Race::white, Race::black, Race::other};
constexpr std::array<AgeBand, 6> kAges{AgeBand::under20, AgeBand::a20_24, AgeBand::a25_29,
                                       AgeBand::a30_34,  AgeBand::a35_39, AgeBand::a40plus};
constexpr std::array<Sex, 2> kSexes{Sex::male, Sex::female};
constexpr std::array<Plurality, 2> kPluralities{Plurality::single, Plurality::multiple};

double mean_of(const std::map<int, double>& series, const YearRange& years,
               const CountyId& county) {
  double sum = 0;
  std::vector<int> missing;
  for (int y = years.first; y <= years.last; ++y) {
    auto it = series.find(y);
    if (it == series.end()) {
      missing.push_back(y);
    } else {
      sum += it->second;
    }
  }
  if (!missing.empty()) {
    std::string s;
    for (int y : missing) s += (s.empty() ? "" : ",") + std::to_string(y);
    throw DataError("county " + county + ": missing disturbed fraction for " + s);
  }
  return sum / years.size();
}

}  // namespace

DoseCell DoseAssignment::at(const CountyId& county, int year) const {
  auto it = cells.find({county, year});
  return it == cells.end() ? DoseCell{} : it->second;
}

void DoseAssignment::validate(const StudyConfig& cfg) const {
  for (const auto& [key, cell] : cells) {
    const auto& [county, year] = key;
    auto c = counties.find(county);
    const bool treated = c != counties.end() && c->second;
    if (cell.dose < 0) throw ValidationError("negative dose for " + county);
    if (cfg.pre_period.contains(year) && (cell.dose != 0 || cell.treated_post)) {
      throw ValidationError("non-zero pre-period dose for " + county);
    }
    if (!cell.treated_post && cell.dose != 0) {
      throw ValidationError("dose without treatment for " + county);
    }
    if (cell.treated_post && !(treated && cfg.post_period.contains(year))) {
      throw ValidationError("treatment flag outside treated post cells for " + county);
    }
  }
}

std::map<int, double> compute_dose(const CountyPanel& panel, bool treated, const StudyConfig& cfg) {
  std::map<int, double> out;
  for (int y : cfg.pre_period.years()) out[y] = 0.0;
  for (int y : cfg.post_period.years()) out[y] = 0.0;
  if (!treated) return out;
  const double baseline = mean_of(panel.disturbed_frac, cfg.baseline_years, panel.county_id);
  std::string missing;
  for (int y : cfg.post_period.years()) {
    auto it = panel.disturbed_frac.find(y);
    if (it == panel.disturbed_frac.end()) {
      missing += (missing.empty() ? "" : ",") + std::to_string(y);
      continue;
    }
    out[y] = std::max(it->second - baseline, 0.0);
  }
  if (!missing.empty()) {
    throw DataError("county " + panel.county_id + ": missing disturbed fraction for " + missing);
  }
  return out;
}

DoseAssignment compute_doses(std::span<const CountyPanel> panels,
                             std::span<const CountyId> treated,
                             std::span<const CountyId> controls, const StudyConfig& cfg) {
  std::map<CountyId, const CountyPanel*> by_id;
  for (const auto& p : panels) by_id[p.county_id] = &p;
  DoseAssignment out;
  auto add = [&](const CountyId& id, bool is_treated) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("no panel for county " + id);
    out.counties[id] = is_treated;
    for (const auto& [year, d] : compute_dose(*it->second, is_treated, cfg)) {
      const bool post = cfg.post_period.contains(year);
      out.cells[{id, year}] = DoseCell{d, is_treated && post};
    }
  };
  for (const auto& id : treated) add(id, true);
  for (const auto& id : controls) {
    if (out.counties.contains(id)) throw ValidationError("county " + id + " is both treated and control");
    add(id, false);
  }
  return out;
}

AnalysisData build_design(std::span<const BirthRecord> births, const DoseAssignment& dose,
                          const StudyConfig& cfg, const DesignOptions& options,
                          const SgaTable* sga_table) {
  std::vector<CountyId> counties;
  for (const auto& [id, treated] : dose.counties) {
    if (!options.treated_only || treated) counties.push_back(id);
  }
  std::map<CountyId, int> county_index;
  for (std::size_t i = 0; i < counties.size(); ++i) county_index[counties[i]] = static_cast<int>(i);

  const YearRange pre = cfg.effective_pre_period();
  auto in_window = [&](int year) {
    return pre.contains(year) || (!options.pre_period_only && cfg.post_period.contains(year));
  };

  AnalysisData out;
  std::map<CellKey, double> cells;
  for (const auto& b : births) {
    auto ci = county_index.find(b.county_id);
    if (ci == county_index.end() || !in_window(b.year)) continue;
    const auto outcome = derive_outcome(b, cfg.outcome, sga_table);
    if (!outcome || !b.mother_race || !b.mother_age_band || !b.infant_sex || !b.plurality) {
      ++out.n_dropped_missing;
      continue;
    }
    CellKey key{ci->second,
                b.year,
                static_cast<int>(*b.mother_race),
                static_cast<int>(*b.mother_age_band),
                static_cast<int>(*b.infant_sex),
                static_cast<int>(*b.plurality),
                *outcome};
    cells[key] += 1.0;
  }
  if (cells.empty()) throw DataError("no complete birth records in the analysis window");

  std::set<int> county_present, years, races, ages, sexes, pluralities;
  for (const auto& [k, w] : cells) {
    county_present.insert(k.county);
    years.insert(k.year);
    races.insert(k.race);
    ages.insert(k.age);
    sexes.insert(k.sex);
    pluralities.insert(k.plurality);
  }

  glm::DesignMatrix& d = out.design;
  d.add_column("intercept", ColumnBlock::intercept);
  std::vector<int> county_col(counties.size(), -1);
  std::vector<int> cluster_of(counties.size(), -1);
  bool first = true;
  for (int c : county_present) {
    cluster_of[static_cast<std::size_t>(c)] = d.add_cluster(counties[static_cast<std::size_t>(c)]);
    if (first) {
      first = false;
      continue;
    }
    county_col[static_cast<std::size_t>(c)] =
        d.add_column("county=" + counties[static_cast<std::size_t>(c)], ColumnBlock::county);
  }
  std::map<int, int> year_col;
  for (int y : years) {
    if (y == *years.begin()) continue;
    year_col[y] = d.add_column("year=" + std::to_string(y), ColumnBlock::year);
  }
  const auto race_cols = add_level_columns(d, "race", kRaces, races, Race::black);
  const auto age_cols = add_level_columns(d, "age", kAges, ages, AgeBand::a20_24);
  const auto sex_cols = add_level_columns(d, "sex", kSexes, sexes, Sex::female);
  const auto plur_cols = add_level_columns(d, "plurality", kPluralities, pluralities, Plurality::multiple);

  switch (options.term) {
    case TreatmentTerm::dose: out.treatment_column = d.add_column("dose", ColumnBlock::treatment); break;
    case TreatmentTerm::binary:
      out.treatment_column = d.add_column("treated_post", ColumnBlock::treatment);
      break;
    case TreatmentTerm::pseudo:
      out.treatment_column = d.add_column("pseudo_treatment", ColumnBlock::treatment);
      break;
    case TreatmentTerm::none: break;
  }

  std::vector<glm::Entry> row;
  double first_treatment = 0;
  bool treatment_varies = false;
  for (const auto& [k, w] : cells) {
    const CountyId& county = counties[static_cast<std::size_t>(k.county)];
    const DoseCell cell = dose.at(county, k.year);
    row.clear();
    row.push_back({0, 1.0});
    if (int c = county_col[static_cast<std::size_t>(k.county)]; c >= 0) row.push_back({c, 1.0});
    if (auto it = year_col.find(k.year); it != year_col.end()) row.push_back({it->second, 1.0});
    for (int c : {race_cols.column[static_cast<std::size_t>(k.race)],
                  age_cols.column[static_cast<std::size_t>(k.age)],
                  sex_cols.column[static_cast<std::size_t>(k.sex)],
                  plur_cols.column[static_cast<std::size_t>(k.plurality)]}) {
      if (c >= 0) row.push_back({c, 1.0});
    }
    double treatment = 0;
    switch (options.term) {
      case TreatmentTerm::dose: treatment = cell.dose; break;
      case TreatmentTerm::binary: treatment = cell.treated_post ? 1.0 : 0.0; break;
      case TreatmentTerm::pseudo: {
        const bool treated = dose.counties.at(county);
        treatment = treated && cfg.pseudo_treated_period.contains(k.year) ? 1.0 : 0.0;
        break;
      }
      case TreatmentTerm::none: break;
    }
    if (out.treatment_column >= 0) {
      if (d.rows() == 0) first_treatment = treatment;
      if (treatment != first_treatment) treatment_varies = true;
      if (treatment != 0) row.push_back({out.treatment_column, treatment});
    }
    d.add_row(row, static_cast<double>(k.y), cluster_of[static_cast<std::size_t>(k.county)], w);
    out.dose.push_back(cell.dose);
    out.treated_post.push_back(cell.treated_post ? 1 : 0);
  }
  if (out.treatment_column >= 0 && !treatment_varies) {
    throw NonIdentifiableError("non-identifiable: constant treatment column '" +
                               d.names[static_cast<std::size_t>(out.treatment_column)] + "'");
  }
  return out;
}

DidFit fit_model(std::string label, std::span<const BirthRecord> births, const DoseAssignment& dose,
                 const StudyConfig& cfg, const DesignOptions& options, const SgaTable* sga_table) {
  DidFit out;
  out.label = std::move(label);
  out.data = build_design(births, dose, cfg, options, sga_table);
  out.fit = glm::fit_logistic(out.data.design);
  out.fit.n_dropped_missing = out.data.n_dropped_missing;
  out.fit.robust_covariance = glm::cluster_robust_covariance(out.fit, out.data.design);
  if (out.data.treatment_column >= 0) {
    out.effect = glm::summarize(
        out.fit, out.data.design.names[static_cast<std::size_t>(out.data.treatment_column)], cfg.alpha);
  }
  return out;
}

DidFit fit_primary_dose_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                              const StudyConfig& cfg, const SgaTable* sga_table) {
  return fit_model("primary_dose", births, dose, cfg, {TreatmentTerm::dose, false, false}, sga_table);
}

DidFit fit_secondary_binary_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                                  const StudyConfig& cfg, const SgaTable* sga_table) {
  return fit_model("secondary_binary", births, dose, cfg, {TreatmentTerm::binary, false, false},
                   sga_table);
}

DidFit fit_treated_only_model(std::span<const BirthRecord> births, const DoseAssignment& dose,
                              const StudyConfig& cfg, const SgaTable* sga_table) {
  return fit_model("treated_only_dose", births, dose, cfg, {TreatmentTerm::dose, true, false},
                   sga_table);
}

DidFit test_of_controls(std::span<const BirthRecord> births, const DoseAssignment& dose,
                        const StudyConfig& cfg, const SgaTable* sga_table) {
  return fit_model("test_of_controls", births, dose, cfg, {TreatmentTerm::pseudo, false, true},
                   sga_table);
}

}  // namespace mdid::did

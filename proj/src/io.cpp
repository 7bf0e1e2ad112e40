#include "mdid/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mdid/errors.hpp"

namespace mdid::io {

namespace {

using nlohmann::json;

std::string where(std::string_view file, std::size_t row) {
  return std::string(file) + " row " + std::to_string(row + 1);
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

double require_double(std::string_view s, std::string_view file, std::size_t row,
                      std::string_view column) {
  auto v = parse_double(s);
  if (!v || !std::isfinite(*v)) {
    throw DataError(where(file, row) + ": unparseable " + std::string(column) + " '" +
                    std::string(s) + "'");
  }
  return *v;
}

int require_int(std::string_view s, std::string_view file, std::size_t row, std::string_view column) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where(file, row) + ": unparseable " + std::string(column) + " '" +
                    std::string(s) + "'");
  }
  return v;
}

bool require_bool(std::string_view s, std::string_view file, std::size_t row, std::string_view column) {
  if (s == "1" || s == "true" || s == "TRUE") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s.empty()) return false;
  throw DataError(where(file, row) + ": unparseable " + std::string(column) + " '" + std::string(s) + "'");
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void check_width(const CsvTable& t, std::string_view file) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw DataError(where(file, r) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(t.rows[r].size()));
    }
  }
}

constexpr std::array<std::string_view, 4> kEduSuffix{"_lt_hs", "_hs", "_some_college", "_college"};

struct CensusScalar {
  std::string_view column;
  std::optional<double> cohort::CountyCensusInputs::*field;
};

const std::array<CensusScalar, 11> kCensusScalars{{
    {"income_1979", &cohort::CountyCensusInputs::income_1979},
    {"income_1989", &cohort::CountyCensusInputs::income_1989},
    {"income_1999", &cohort::CountyCensusInputs::income_1999},
    {"income_2011", &cohort::CountyCensusInputs::income_2011},
    {"poverty_1980", &cohort::CountyCensusInputs::poverty_1980},
    {"poverty_1990", &cohort::CountyCensusInputs::poverty_1990},
    {"poverty_2000", &cohort::CountyCensusInputs::poverty_2000},
    {"poverty_2010", &cohort::CountyCensusInputs::poverty_2010},
    {"percent_white_1990", &cohort::CountyCensusInputs::percent_white_1990},
    {"smoking_births_1989_2003", &cohort::CountyCensusInputs::smoking_births_1989_2003},
    {"known_smoking_births_1989_2003", &cohort::CountyCensusInputs::known_smoking_births_1989_2003},
}};

struct CensusEducation {
  std::string_view prefix;
  std::optional<cohort::EducationShares> cohort::CountyCensusInputs::*field;
};

const std::array<CensusEducation, 4> kCensusEducation{{
    {"education_1980", &cohort::CountyCensusInputs::education_1980},
    {"education_1990", &cohort::CountyCensusInputs::education_1990},
    {"education_2000", &cohort::CountyCensusInputs::education_2000},
    {"education_2012_2016", &cohort::CountyCensusInputs::education_2012_2016},
}};

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing required column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  bool any = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw DataError("csv: stray quote inside unquoted field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        any = false;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  if (any) end_record();

  CsvTable t;
  if (records.empty()) throw DataError("csv: empty input, header row required");
  t.header = std::move(records.front());
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (!seen.insert(h).second) throw DataError("csv: duplicate column '" + h + "'");
  }
  t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return read_csv(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {
void write_field(std::ostream& out, const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) {
    out << f;
    return;
  }
  out << '"';
  for (char c : f) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}
}  // namespace

void write_csv(std::ostream& out, const CsvTable& table) {
  auto line = [&](const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out << ',';
      write_field(out, rec[i]);
    }
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
}

void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, table);
  if (!out) throw DataError("write failed for " + path.string());
}

std::string exact_number(double v) {
  char buf[32];
  for (int precision : {15, 16, 17}) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Counties

std::vector<CountyPanel> parse_county_csv(const CsvTable& t) {
  constexpr std::string_view file = "county csv";
  check_width(t, file);
  const auto c_id = t.column("county_id"), c_state = t.column("state"), c_area = t.column("area_sq_mi"),
             c_year = t.column("year"), c_frac = t.column("disturbed_frac"),
             c_surf = t.column("surface_tons"), c_total = t.column("total_tons"),
             c_border = t.column("borders_treated");

  std::map<CountyId, CountyPanel> panels;
  std::vector<CountyId> order;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const CountyId& id = row[c_id];
    if (id.empty()) throw DataError(where(file, r) + ": empty county_id");
    const auto state = parse_state(row[c_state]);
    if (!state) throw DataError(where(file, r) + ": unknown state '" + row[c_state] + "'");
    const double area = require_double(row[c_area], file, r, "area_sq_mi");
    if (!(area > 0)) throw DataError(where(file, r) + ": area_sq_mi must be positive");
    const int year = require_int(row[c_year], file, r, "year");
    const bool border = require_bool(row[c_border], file, r, "borders_treated");

    auto [it, fresh] = panels.try_emplace(id);
    CountyPanel& p = it->second;
    if (fresh) {
      order.push_back(id);
      p.county_id = id;
      p.state = *state;
      p.area_sq_mi = area;
      p.borders_treated = border;
    } else if (p.state != *state || p.area_sq_mi != area || p.borders_treated != border) {
      throw DataError(where(file, r) + ": county attributes of " + id + " differ between rows");
    }
    if (p.surface_production.count(year) || p.disturbed_frac.count(year) || p.total_production.count(year)) {
      throw DataError(where(file, r) + ": duplicate key (" + id + ", " + std::to_string(year) + ")");
    }
    if (!row[c_frac].empty()) {
      const double f = require_double(row[c_frac], file, r, "disturbed_frac");
      if (!(f >= 0 && f <= 1)) {
        throw DataError(where(file, r) + ": disturbed_frac " + row[c_frac] + " outside [0,1]");
      }
      p.disturbed_frac[year] = f;
    }
    if (!row[c_surf].empty()) {
      const double s = require_double(row[c_surf], file, r, "surface_tons");
      if (s < 0) throw DataError(where(file, r) + ": negative surface_tons");
      p.surface_production[year] = s;
    }
    if (!row[c_total].empty()) {
      const double s = require_double(row[c_total], file, r, "total_tons");
      if (s < 0) throw DataError(where(file, r) + ": negative total_tons");
      p.total_production[year] = s;
    }
  }
  std::vector<CountyPanel> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    auto& p = panels.at(id);
    try {
      p.validate();
    } catch (const ValidationError& e) {
      throw DataError(std::string(file) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<CountyPanel> load_county_csv(const std::filesystem::path& path) {
  const auto t = read_csv_file(path);
  try {
    return parse_county_csv(t);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

CsvTable county_table(const std::vector<CountyPanel>& panels) {
  CsvTable t;
  t.header = {"county_id", "state", "area_sq_mi", "year", "disturbed_frac", "surface_tons", "total_tons",
              "borders_treated"};
  for (const auto& p : panels) {
    std::set<int> years;
    for (const auto& m : {&p.disturbed_frac, &p.surface_production, &p.total_production}) {
      for (const auto& kv : *m) years.insert(kv.first);
    }
    auto cell = [](const std::map<int, double>& m, int y) {
      auto it = m.find(y);
      return it == m.end() ? std::string() : exact_number(it->second);
    };
    for (int y : years) {
      t.rows.push_back({p.county_id, std::string(to_string(p.state)), exact_number(p.area_sq_mi),
                        std::to_string(y), cell(p.disturbed_frac, y), cell(p.surface_production, y),
                        cell(p.total_production, y), p.borders_treated ? "1" : "0"});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Births

BirthData parse_births_csv(const CsvTable& t) {
  constexpr std::string_view file = "births csv";
  check_width(t, file);
  const std::array<std::string_view, 8> cols{"county_id",   "year",          "birth_weight_g",
                                             "gestational_age_wk", "mother_race", "mother_age_band",
                                             "infant_sex",  "plurality"};
  std::array<std::size_t, 8> idx{};
  for (std::size_t k = 0; k < cols.size(); ++k) idx[k] = t.column(cols[k]);

  BirthData out;
  out.births.reserve(t.rows.size());
  out.tally.rows = t.rows.size();
  for (std::size_t k = 2; k < cols.size(); ++k) out.tally.missing[std::string(cols[k])] = 0;

  auto enum_field = [&](const std::string& s, std::size_t r, std::string_view col, auto parse) {
    using Opt = decltype(parse(s));
    if (s.empty()) {
      ++out.tally.missing[std::string(col)];
      return Opt{};
    }
    auto v = parse(s);
    if (!v) throw DataError(where(file, r) + ": unknown " + std::string(col) + " '" + s + "'");
    return v;
  };
  auto num_field = [&](const std::string& s, std::size_t r, std::string_view col) -> std::optional<double> {
    if (s.empty()) {
      ++out.tally.missing[std::string(col)];
      return std::nullopt;
    }
    const double v = require_double(s, file, r, col);
    if (v <= 0) throw DataError(where(file, r) + ": " + std::string(col) + " must be positive");
    return v;
  };

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    BirthRecord b;
    b.county_id = row[idx[0]];
    if (b.county_id.empty()) throw DataError(where(file, r) + ": empty county_id");
    b.year = require_int(row[idx[1]], file, r, "year");
    b.birth_weight_g = num_field(row[idx[2]], r, cols[2]);
    b.gestational_age_wk = num_field(row[idx[3]], r, cols[3]);
    b.mother_race = enum_field(row[idx[4]], r, cols[4], [](const std::string& s) { return parse_race(s); });
    b.mother_age_band =
        enum_field(row[idx[5]], r, cols[5], [](const std::string& s) { return parse_age_band(s); });
    b.infant_sex = enum_field(row[idx[6]], r, cols[6], [](const std::string& s) { return parse_sex(s); });
    b.plurality =
        enum_field(row[idx[7]], r, cols[7], [](const std::string& s) { return parse_plurality(s); });
    out.births.push_back(std::move(b));
  }
  return out;
}

BirthData load_births_csv(const std::filesystem::path& path) {
  const auto t = read_csv_file(path);
  try {
    return parse_births_csv(t);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

CsvTable births_table(const std::vector<BirthRecord>& births) {
  CsvTable t;
  t.header = {"county_id",   "year",          "birth_weight_g", "gestational_age_wk",
              "mother_race", "mother_age_band", "infant_sex",   "plurality"};
  t.rows.reserve(births.size());
  auto num = [](const std::optional<double>& v) { return v ? exact_number(*v) : std::string(); };
  auto name = [](const auto& v) { return v ? std::string(to_string(*v)) : std::string(); };
  for (const auto& b : births) {
    t.rows.push_back({b.county_id, std::to_string(b.year), num(b.birth_weight_g), num(b.gestational_age_wk),
                      name(b.mother_race), name(b.mother_age_band), name(b.infant_sex), name(b.plurality)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Census inputs

std::vector<cohort::CountyCensusInputs> parse_census_csv(const CsvTable& t) {
  constexpr std::string_view file = "covariates csv";
  check_width(t, file);
  const auto c_id = t.column("county_id");
  std::vector<cohort::CountyCensusInputs> out;
  std::set<CountyId> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    cohort::CountyCensusInputs c;
    c.county_id = row[c_id];
    if (!seen.insert(c.county_id).second) {
      throw DataError(where(file, r) + ": duplicate key (" + c.county_id + ")");
    }
    for (const auto& s : kCensusScalars) {
      if (!t.has_column(s.column)) continue;
      const auto& cell = row[t.column(s.column)];
      if (!cell.empty()) c.*(s.field) = require_double(cell, file, r, s.column);
    }
    for (const auto& e : kCensusEducation) {
      std::array<std::optional<double>, 4> parts;
      int present = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::string col = std::string(e.prefix) + std::string(kEduSuffix[k]);
        if (!t.has_column(col)) continue;
        const auto& cell = row[t.column(col)];
        if (!cell.empty()) {
          parts[k] = require_double(cell, file, r, col);
          ++present;
        }
      }
      if (present == 4) {
        c.*(e.field) = cohort::EducationShares{*parts[0], *parts[1], *parts[2], *parts[3]};
      } else if (present != 0) {
        throw DataError(where(file, r) + ": " + std::string(e.prefix) + " has only some of its shares");
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<cohort::CountyCensusInputs> load_census_csv(const std::filesystem::path& path) {
  const auto t = read_csv_file(path);
  try {
    return parse_census_csv(t);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

CsvTable census_table(const std::vector<cohort::CountyCensusInputs>& census) {
  CsvTable t;
  t.header.push_back("county_id");
  for (const auto& s : kCensusScalars) t.header.emplace_back(s.column);
  for (const auto& e : kCensusEducation) {
    for (auto suffix : kEduSuffix) t.header.push_back(std::string(e.prefix) + std::string(suffix));
  }
  for (const auto& c : census) {
    std::vector<std::string> row{c.county_id};
    for (const auto& s : kCensusScalars) {
      const auto& v = c.*(s.field);
      row.push_back(v ? exact_number(*v) : std::string());
    }
    for (const auto& e : kCensusEducation) {
      const auto& v = c.*(e.field);
      if (v) {
        for (double x : {v->lt_hs, v->hs, v->some_college, v->college}) row.push_back(exact_number(x));
      } else {
        row.insert(row.end(), 4, std::string());
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// SGA reference

SgaTable load_sga_csv(const std::filesystem::path& path) {
  const auto t = read_csv_file(path);
  const std::string file = path.string();
  check_width(t, file);
  const auto c_week = t.column("week"), c_sex = t.column("sex"), c_p10 = t.column("p10_grams");
  SgaTable out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto sex = parse_sex(t.rows[r][c_sex]);
    if (!sex) throw DataError(where(file, r) + ": unknown sex '" + t.rows[r][c_sex] + "'");
    out.set(require_int(t.rows[r][c_week], file, r, "week"), *sex,
            require_double(t.rows[r][c_p10], file, r, "p10_grams"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

YearRange range_from(const json& j, std::string_view key) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string(key) + " must be a [first, last] pair");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

json range_to(const YearRange& r) { return json::array({r.first, r.last}); }

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "pre_period",         "post_period",        "baseline_years",        "pseudo_treated_period",
      "treated_threshold",  "control_surface_max", "control_total_max",    "total_production_scale",
      "exclude_border_controls", "plain_mahalanobis", "caliper",           "outcome",
      "theta_grid",         "confounder_prevalence", "confounder_odds_ratio", "alpha",
      "rng_seed"};
  return keys;
}

}  // namespace

StudyConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  StudyConfig cfg;
  try {
    if (j.contains("pre_period")) cfg.pre_period = range_from(j["pre_period"], "pre_period");
    if (j.contains("post_period")) cfg.post_period = range_from(j["post_period"], "post_period");
    if (j.contains("baseline_years")) cfg.baseline_years = range_from(j["baseline_years"], "baseline_years");
    if (j.contains("pseudo_treated_period")) {
      cfg.pseudo_treated_period = range_from(j["pseudo_treated_period"], "pseudo_treated_period");
    }
    if (j.contains("treated_threshold")) cfg.treated_threshold = j["treated_threshold"].get<double>();
    if (j.contains("control_surface_max")) cfg.control_surface_max = j["control_surface_max"].get<double>();
    if (j.contains("control_total_max")) cfg.control_total_max = j["control_total_max"].get<double>();
    if (j.contains("total_production_scale")) {
      const auto s = j["total_production_scale"].get<std::string>();
      if (s == "raw_tons") {
        cfg.total_production_scale = TotalProductionScale::raw_tons;
      } else if (s == "per_sq_mi") {
        cfg.total_production_scale = TotalProductionScale::per_sq_mi;
      } else {
        throw ConfigError("total_production_scale must be raw_tons or per_sq_mi");
      }
    }
    if (j.contains("exclude_border_controls")) {
      cfg.exclude_border_controls = j["exclude_border_controls"].get<bool>();
    }
    if (j.contains("plain_mahalanobis")) cfg.plain_mahalanobis = j["plain_mahalanobis"].get<bool>();
    if (j.contains("caliper") && !j["caliper"].is_null()) cfg.caliper = j["caliper"].get<double>();
    if (j.contains("outcome")) cfg.outcome = parse_outcome(j["outcome"].get<std::string>());
    if (j.contains("theta_grid")) cfg.theta_grid = j["theta_grid"].get<std::vector<double>>();
    if (j.contains("confounder_prevalence")) {
      cfg.confounder_prevalence = j["confounder_prevalence"].get<std::vector<double>>();
    }
    if (j.contains("confounder_odds_ratio")) {
      cfg.confounder_odds_ratio = j["confounder_odds_ratio"].get<std::vector<double>>();
    }
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("rng_seed")) cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string config_to_json(const StudyConfig& cfg) {
  json j;
  j["pre_period"] = range_to(cfg.pre_period);
  j["post_period"] = range_to(cfg.post_period);
  j["baseline_years"] = range_to(cfg.baseline_years);
  j["pseudo_treated_period"] = range_to(cfg.pseudo_treated_period);
  j["treated_threshold"] = cfg.treated_threshold;
  j["control_surface_max"] = cfg.control_surface_max;
  j["control_total_max"] = cfg.control_total_max;
  j["total_production_scale"] =
      cfg.total_production_scale == TotalProductionScale::raw_tons ? "raw_tons" : "per_sq_mi";
  j["exclude_border_controls"] = cfg.exclude_border_controls;
  j["plain_mahalanobis"] = cfg.plain_mahalanobis;
  j["caliper"] = cfg.caliper ? json(*cfg.caliper) : json(nullptr);
  j["outcome"] = std::string(to_string(cfg.outcome));
  j["theta_grid"] = cfg.theta_grid;
  j["confounder_prevalence"] = cfg.confounder_prevalence;
  j["confounder_odds_ratio"] = cfg.confounder_odds_ratio;
  j["alpha"] = cfg.alpha;
  j["rng_seed"] = cfg.rng_seed;
  return j.dump(2) + "\n";
}

StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace mdid::io

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/cohort.hpp"
#include "mdid/core_data.hpp"

namespace mdid::io {

// RFC 4180 text table: comma separated, optional double quotes, "" escapes a
// quote inside a quoted field. The first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index; throws DataError naming the column when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  bool operator==(const CsvTable&) const = default;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);

// Shortest text that parses back to the same double ("%.17g" when needed).
std::string exact_number(double v);

// county_id, state, area_sq_mi, year, disturbed_frac, surface_tons,
// total_tons, borders_treated. One row per county-year; an empty
// disturbed_frac means the county-year is absent from the disturbed-area data.
std::vector<CountyPanel> load_county_csv(const std::filesystem::path& path);
std::vector<CountyPanel> parse_county_csv(const CsvTable& table);
CsvTable county_table(const std::vector<CountyPanel>& panels);

struct MissingTally {
  std::size_t rows = 0;
  std::map<std::string, std::size_t> missing;  // column -> empty cells
  bool operator==(const MissingTally&) const = default;
};

struct BirthData {
  std::vector<BirthRecord> births;
  MissingTally tally;
};

// county_id, year, birth_weight_g, gestational_age_wk, mother_race,
// mother_age_band, infant_sex, plurality. Empty cells are missing values.
BirthData load_births_csv(const std::filesystem::path& path);
BirthData parse_births_csv(const CsvTable& table);
CsvTable births_table(const std::vector<BirthRecord>& births);

// One row per county; education shares are split into four columns per year
// (suffixes _lt_hs, _hs, _some_college, _college).
std::vector<cohort::CountyCensusInputs> load_census_csv(const std::filesystem::path& path);
std::vector<cohort::CountyCensusInputs> parse_census_csv(const CsvTable& table);
CsvTable census_table(const std::vector<cohort::CountyCensusInputs>& census);

// week, sex, p10_grams.
SgaTable load_sga_csv(const std::filesystem::path& path);

// JSON object with StudyConfig field names; absent keys keep their defaults.
StudyConfig config_from_json(std::string_view text);
std::string config_to_json(const StudyConfig& cfg);
StudyConfig load_config(const std::filesystem::path& path);

}  // namespace mdid::io

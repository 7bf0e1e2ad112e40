#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/io.hpp"

namespace mdid::report {

// Report number format: six significant digits ("%.6g"), "NA" for NaN,
// "inf" / "-inf" for infinities.
std::string fmt(double v);

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  io::CsvTable csv() const;
  static Table from_csv(std::string name, const io::CsvTable& csv);
  bool operator==(const Table&) const = default;
};

struct RunReport {
  std::string label;  // "primary control group" or "secondary control group"
  std::vector<Table> tables;
  std::vector<std::string> completed_stages;
  std::string failed_stage;  // empty when every requested stage finished
  std::string failure;
  std::vector<std::string> warnings;  // sorted

  bool complete() const { return failed_stage.empty(); }
  // nullptr when absent.
  const Table* find(std::string_view name) const;
  Table& table(std::string name, std::vector<std::string> columns);
};

// Plain-text rendering of every table, in report order.
std::string render_summary(const RunReport& report);
std::string render_manifest(const RunReport& report);

// Writes <dir>/<table>.csv for each table plus summary.txt and MANIFEST.
void write_report(const RunReport& report, const std::filesystem::path& dir);
// Reads back the tables listed in <dir>/MANIFEST.
std::vector<Table> read_tables(const std::filesystem::path& dir);

}  // namespace mdid::report

#include "mdid/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdid/errors.hpp"

namespace mdid::report {

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0) v = 0;  // drop the sign of negative zero
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    throw ValidationError("table " + name + ": row has " + std::to_string(row.size()) + " cells, expected " +
                          std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

io::CsvTable Table::csv() const { return {columns, rows}; }

Table Table::from_csv(std::string name, const io::CsvTable& csv) {
  return {std::move(name), csv.header, csv.rows};
}

const Table* RunReport::find(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

Table& RunReport::table(std::string name, std::vector<std::string> columns) {
  tables.push_back({std::move(name), std::move(columns), {}});
  return tables.back();
}

std::string render_summary(const RunReport& report) {
  std::ostringstream out;
  out << "Run: " << report.label << "\n";
  out << "Status: " << (report.complete() ? "complete" : "failed at stage " + report.failed_stage) << "\n";
  if (!report.complete()) out << "Error: " << report.failure << "\n";
  for (const auto& t : report.tables) {
    // Large listings stay in their CSV files.
    if (t.name.rfind("plot_", 0) == 0 || t.name == "coefficients") continue;
    out << "\n== " << t.name << " ==\n";
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      width[c] = t.columns[c].size();
      for (const auto& r : t.rows) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) out << "  ";
        out << cells[c];
        if (c + 1 < cells.size()) out << std::string(width[c] - cells[c].size(), ' ');
      }
      out << "\n";
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
  }
  if (!report.warnings.empty()) {
    out << "\n== warnings ==\n";
    for (const auto& w : report.warnings) out << w << "\n";
  }
  return out.str();
}

std::string render_manifest(const RunReport& report) {
  std::ostringstream out;
  out << "status: " << (report.complete() ? "complete" : "failed") << "\n";
  out << "label: " << report.label << "\n";
  if (!report.complete()) {
    out << "failed_stage: " << report.failed_stage << "\n";
    out << "error: " << report.failure << "\n";
  }
  for (const auto& s : report.completed_stages) out << "completed: " << s << "\n";
  for (const auto& t : report.tables) out << "table: " << t.name << ".csv\n";
  out << "file: summary.txt\n";
  return out.str();
}

namespace {
void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}
}  // namespace

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : report.tables) io::write_csv_file(dir / (t.name + ".csv"), t.csv());
  write_text(dir / "summary.txt", render_summary(report));
  // Last, so a present MANIFEST means the files it lists were flushed.
  write_text(dir / "MANIFEST", render_manifest(report));
}

std::vector<Table> read_tables(const std::filesystem::path& dir) {
  std::ifstream in(dir / "MANIFEST");
  if (!in) throw DataError("no MANIFEST in " + dir.string());
  std::vector<Table> out;
  std::string line;
  const std::string prefix = "table: ";
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    const std::string file = line.substr(prefix.size());
    const std::string stem = file.substr(0, file.size() - 4);
    out.push_back(Table::from_csv(stem, io::read_csv_file(dir / file)));
  }
  return out;
}

}  // namespace mdid::report

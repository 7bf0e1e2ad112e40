#include "mdid/design.hpp"

#include <numeric>

#include "mdid/errors.hpp"

namespace mdid::glm {

int DesignMatrix::add_column(std::string name, ColumnBlock block) {
  names.push_back(std::move(name));
  blocks.push_back(block);
  return static_cast<int>(names.size()) - 1;
}

int DesignMatrix::add_cluster(std::string name) {
  cluster_names.push_back(std::move(name));
  return static_cast<int>(cluster_names.size()) - 1;
}

void DesignMatrix::add_row(std::span<const Entry> entries, double outcome, int cluster_index,
                           double row_weight, double row_offset) {
  for (const auto& e : entries) {
    if (e.column < 0 || static_cast<std::size_t>(e.column) >= cols()) {
      throw ValidationError("design row references unknown column " + std::to_string(e.column));
    }
    col_index.push_back(e.column);
    value.push_back(e.value);
  }
  if (cluster_index < 0 || static_cast<std::size_t>(cluster_index) >= cluster_names.size()) {
    throw ValidationError("design row references unknown cluster");
  }
  row_start.push_back(col_index.size());
  y.push_back(outcome);
  weight.push_back(row_weight);
  offset.push_back(row_offset);
  cluster.push_back(cluster_index);
}

double DesignMatrix::total_weight() const {
  return std::accumulate(weight.begin(), weight.end(), 0.0);
}

Eigen::MatrixXd DesignMatrix::dense() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                            static_cast<Eigen::Index>(cols()));
  for (std::size_t r = 0; r < rows(); ++r) {
    auto c = row_columns(r);
    auto v = row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) x(static_cast<Eigen::Index>(r), c[k]) += v[k];
  }
  return x;
}

}  // namespace mdid::glm

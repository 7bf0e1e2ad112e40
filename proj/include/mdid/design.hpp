#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdid/core_data.hpp"

namespace mdid::glm {

struct Entry {
  int column;
  double value;
};

// Logistic-regression design stored row-compressed. Every column is an
// explicit coefficient (dummy columns are not absorbed); only the storage is
// sparse because a fixed-effects row has a handful of non-zeros.
//
// `weight` holds frequency weights: a row with weight w stands for w
// observations with identical covariates, outcome, cluster and offset.
struct DesignMatrix {
  std::vector<std::string> names;
  std::vector<ColumnBlock> blocks;

  std::vector<std::size_t> row_start{0};
  std::vector<int> col_index;
  std::vector<double> value;

  std::vector<double> y;
  std::vector<double> weight;
  std::vector<double> offset;
  std::vector<int> cluster;
  std::vector<std::string> cluster_names;

  std::size_t rows() const { return y.size(); }
  std::size_t cols() const { return names.size(); }

  int add_column(std::string name, ColumnBlock block);
  int add_cluster(std::string name);
  // Entries must reference existing columns; duplicates are not merged.
  void add_row(std::span<const Entry> entries, double outcome, int cluster_index,
               double row_weight = 1.0, double row_offset = 0.0);

  std::span<const int> row_columns(std::size_t r) const {
    return {col_index.data() + row_start[r], row_start[r + 1] - row_start[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {value.data() + row_start[r], row_start[r + 1] - row_start[r]};
  }

  double total_weight() const;
  Eigen::MatrixXd dense() const;
};

}  // namespace mdid::glm

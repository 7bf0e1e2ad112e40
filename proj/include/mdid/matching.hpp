#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mdid/core_data.hpp"

namespace mdid::matching {

// Named covariate rows keyed by county.
struct CovariateTable {
  std::vector<std::string> names;
  std::map<CountyId, Eigen::VectorXd> rows;

  static CovariateTable from(const std::map<CountyId, CovariateVector>& covariates);
  // Stacks the rows for `ids` in order; throws DataError on an unknown id.
  Eigen::MatrixXd select(std::span<const CountyId> ids) const;
};

// Per-covariate SMD denominator sqrt((var_T + var_pool)/2), n-1 variances,
// fixed once from the treated group and the full pre-match control pool.
Eigen::VectorXd smd_scale(const CovariateTable& table, std::span<const CountyId> treated_ids,
                          std::span<const CountyId> pool_ids);

// (mean_T - mean_C) / scale per covariate. A zero scale yields 0 when the
// means agree and DegenerateError otherwise.
Eigen::VectorXd standardized_differences(const CovariateTable& table,
                                         std::span<const CountyId> treated_ids,
                                         std::span<const CountyId> comparison_ids,
                                         const Eigen::VectorXd& scale);

// Average ranks (ties share the mean rank), column by column.
Eigen::MatrixXd column_ranks(const Eigen::MatrixXd& values);

enum class DistanceKind { rank_mahalanobis, mahalanobis };

// |T| x |C| Mahalanobis distances. With rank_mahalanobis both sides are
// replaced by their ranks within the combined pool first. A singular
// covariance falls back to its diagonal with a warning.
Eigen::MatrixXd distance_matrix(const CovariateTable& table, std::span<const CountyId> treated_ids,
                                std::span<const CountyId> control_ids,
                                DistanceKind kind = DistanceKind::rank_mahalanobis);

struct Assignment {
  std::vector<int> control_of;  // control column for each treated row
  double total = 0;
};

// Exact minimum-cost injective assignment of rows to columns (rows <= cols).
// Among optimal assignments the lexicographically smallest control_of is
// returned. +inf entries are forbidden pairs; InfeasibleError when no
// finite assignment exists or when cols < rows.
Assignment optimal_pair_match(const Eigen::MatrixXd& distance);

// Bare Hungarian solve (no tie-break); exposed for benchmarking.
Assignment solve_assignment(const Eigen::MatrixXd& distance);

// Forbids pairs farther apart than the caliper by setting them to +inf.
Eigen::MatrixXd apply_caliper(const Eigen::MatrixXd& distance, double caliper);

struct MatchResult {
  std::vector<std::pair<CountyId, CountyId>> pairs;  // (treated, control), treated order
  double total_distance = 0;
  std::vector<std::string> covariate_names;
  Eigen::VectorXd smd_before;  // treated vs full control pool
  Eigen::VectorXd smd_after;   // treated vs matched controls, same denominators
  Eigen::VectorXd treated_mean;
  Eigen::VectorXd matched_mean;
  Eigen::VectorXd pool_mean;
};

struct MatchOptions {
  DistanceKind kind = DistanceKind::rank_mahalanobis;
  std::optional<double> caliper;
};

MatchResult match_counties(const CovariateTable& table, std::span<const CountyId> treated_ids,
                           std::span<const CountyId> control_ids, const MatchOptions& options = {});

}  // namespace mdid::matching

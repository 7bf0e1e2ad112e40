#include "mdid/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdid/errors.hpp"
#include "mdid/kernels.hpp"

namespace mdid::matching {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd column_variance(const Eigen::MatrixXd& m) {
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mean;
  return (centered.colwise().squaredNorm() / static_cast<double>(m.rows() - 1)).transpose();
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& m) {
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(m.rows() - 1);
}

Eigen::MatrixXd inverse_or_diagonal(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double max_ev = ev.cwiseAbs().maxCoeff();
  if (max_ev > 0 && ev.minCoeff() > 1e-10 * max_ev) {
    Eigen::MatrixXd inv = cov.llt().solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    return 0.5 * (inv + inv.transpose());
  }
  warn("singular covariate covariance; using per-covariate variances only");
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (Eigen::Index k = 0; k < cov.rows(); ++k) {
    // Constant covariates carry no distance information.
    inv(k, k) = cov(k, k) > 0 ? 1.0 / cov(k, k) : 0.0;
  }
  return inv;
}

// Hungarian algorithm with potentials, O(n^2 m); `a` must be finite.
Assignment hungarian(const Eigen::MatrixXd& a) {
  const auto n = static_cast<int>(a.rows());
  const auto m = static_cast<int>(a.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.control_of.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) out.control_of[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  for (int i = 0; i < n; ++i) out.total += a(i, out.control_of[static_cast<std::size_t>(i)]);
  return out;
}

// Replaces forbidden (+inf) cells with a cost no optimal finite assignment
// can afford.
Eigen::MatrixXd finite_costs(const Eigen::MatrixXd& d, double& big) {
  double max_finite = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x = d.data()[i];
    if (std::isfinite(x)) max_finite = std::max(max_finite, x);
  }
  big = (max_finite + 1.0) * static_cast<double>(d.rows() + 1);
  Eigen::MatrixXd out = d;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out.data()[i])) out.data()[i] = big;
  }
  return out;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& d, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d(rows[i], cols[j]);
    }
  }
  return out;
}

void check_matrix(const Eigen::MatrixXd& d) {
  if (d.rows() == 0) throw ValidationError("distance matrix has no treated rows");
  if (d.cols() < d.rows()) {
    throw InfeasibleError("infeasible: " + std::to_string(d.cols()) + " controls for " +
                          std::to_string(d.rows()) + " treated units");
  }
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x = d.data()[i];
    if (std::isnan(x) || x < 0) throw ValidationError("distances must be non-negative numbers");
  }
}

}  // namespace

CovariateTable CovariateTable::from(const std::map<CountyId, CovariateVector>& covariates) {
  CovariateTable t;
  for (auto name : CovariateVector::kNames) t.names.emplace_back(name);
  for (const auto& [id, cv] : covariates) {
    const auto vals = cv.values();
    t.rows[id] = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  return t;
}

Eigen::MatrixXd CovariateTable::select(std::span<const CountyId> ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = rows.find(ids[i]);
    if (it == rows.end()) throw DataError("no covariates for county " + ids[i]);
    out.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
  }
  return out;
}

Eigen::VectorXd smd_scale(const CovariateTable& table, std::span<const CountyId> treated_ids,
                          std::span<const CountyId> pool_ids) {
  if (treated_ids.size() < 2 || pool_ids.size() < 2) {
    throw ValidationError("SMD needs at least 2 units on each side");
  }
  const Eigen::VectorXd var_t = column_variance(table.select(treated_ids));
  const Eigen::VectorXd var_c = column_variance(table.select(pool_ids));
  return ((var_t + var_c) / 2.0).cwiseSqrt();
}

Eigen::VectorXd standardized_differences(const CovariateTable& table,
                                         std::span<const CountyId> treated_ids,
                                         std::span<const CountyId> comparison_ids,
                                         const Eigen::VectorXd& scale) {
  if (treated_ids.size() < 2 || comparison_ids.size() < 2) {
    throw ValidationError("SMD needs at least 2 units on each side");
  }
  const Eigen::VectorXd mean_t = table.select(treated_ids).colwise().mean().transpose();
  const Eigen::VectorXd mean_c = table.select(comparison_ids).colwise().mean().transpose();
  Eigen::VectorXd smd(mean_t.size());
  for (Eigen::Index k = 0; k < smd.size(); ++k) {
    const double gap = mean_t(k) - mean_c(k);
    if (scale(k) > 0) {
      smd(k) = gap / scale(k);
    } else if (gap == 0) {
      smd(k) = 0;
    } else {
      throw DegenerateError("degenerate covariate: " + table.names[static_cast<std::size_t>(k)]);
    }
  }
  return smd;
}

Eigen::MatrixXd column_ranks(const Eigen::MatrixXd& values) {
  const Eigen::Index n = values.rows();
  Eigen::MatrixXd ranks(n, values.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a, k) < values(b, k); });
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && values(order[j + 1], k) == values(order[i], k)) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) ranks(order[t], k) = avg;
      i = j + 1;
    }
  }
  return ranks;
}

Eigen::MatrixXd distance_matrix(const CovariateTable& table, std::span<const CountyId> treated_ids,
                                std::span<const CountyId> control_ids, DistanceKind kind) {
  const Eigen::MatrixXd t = table.select(treated_ids);
  const Eigen::MatrixXd c = table.select(control_ids);
  Eigen::MatrixXd pooled(t.rows() + c.rows(), t.cols());
  pooled << t, c;
  if (pooled.rows() < 2) throw ValidationError("distance matrix needs at least 2 units");
  if (kind == DistanceKind::rank_mahalanobis) pooled = column_ranks(pooled);
  const Eigen::MatrixXd inv_cov = inverse_or_diagonal(covariance(pooled));
  return kernels::omp::mahalanobis(pooled.topRows(t.rows()), pooled.bottomRows(c.rows()), inv_cov);
}

Assignment solve_assignment(const Eigen::MatrixXd& distance) {
  check_matrix(distance);
  double big = 0;
  return hungarian(finite_costs(distance, big));
}

Assignment optimal_pair_match(const Eigen::MatrixXd& distance) {
  check_matrix(distance);
  double big = 0;
  const Eigen::MatrixXd d = finite_costs(distance, big);
  const Assignment best = hungarian(d);
  if (best.total >= big) {
    throw InfeasibleError("infeasible: no assignment avoids forbidden (caliper) pairs");
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(best.total));
  const auto n = static_cast<int>(d.rows());
  const auto m = static_cast<int>(d.cols());

  // Fix rows in order, each to the smallest control that still admits an
  // optimal completion.
  Assignment out;
  out.control_of.assign(static_cast<std::size_t>(n), -1);
  std::vector<char> taken(static_cast<std::size_t>(m), 0);
  double prefix = 0;
  for (int t = 0; t < n; ++t) {
    std::vector<int> rest_rows;
    for (int r = t + 1; r < n; ++r) rest_rows.push_back(r);
    bool fixed = false;
    for (int c = 0; c < m && !fixed; ++c) {
      if (taken[static_cast<std::size_t>(c)] || d(t, c) >= big) continue;
      std::vector<int> cols;
      for (int j = 0; j < m; ++j) {
        if (!taken[static_cast<std::size_t>(j)] && j != c) cols.push_back(j);
      }
      double bound = prefix + d(t, c);
      for (int r : rest_rows) {
        double row_min = kInf;
        for (int j : cols) row_min = std::min(row_min, d(r, j));
        bound += row_min;
      }
      if (bound > best.total + tol) continue;
      const double rest =
          rest_rows.empty() ? 0.0 : hungarian(submatrix(d, rest_rows, cols)).total;
      if (prefix + d(t, c) + rest <= best.total + tol) {
        out.control_of[static_cast<std::size_t>(t)] = c;
        taken[static_cast<std::size_t>(c)] = 1;
        prefix += d(t, c);
        fixed = true;
      }
    }
    if (!fixed) {
      // Rounding pushed every completion past the tolerance; keep the solver's choice.
      return best;
    }
  }
  out.total = prefix;
  return out;
}

Eigen::MatrixXd apply_caliper(const Eigen::MatrixXd& distance, double caliper) {
  Eigen::MatrixXd out = distance;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out.data()[i] > caliper) out.data()[i] = kInf;
  }
  return out;
}

MatchResult match_counties(const CovariateTable& table, std::span<const CountyId> treated_ids,
                           std::span<const CountyId> control_ids, const MatchOptions& options) {
  Eigen::MatrixXd d = distance_matrix(table, treated_ids, control_ids, options.kind);
  if (options.caliper) d = apply_caliper(d, *options.caliper);
  const Assignment a = optimal_pair_match(d);

  MatchResult res;
  res.covariate_names = table.names;
  res.total_distance = a.total;
  std::vector<CountyId> matched;
  for (std::size_t i = 0; i < treated_ids.size(); ++i) {
    const auto& control = control_ids[static_cast<std::size_t>(a.control_of[i])];
    res.pairs.emplace_back(treated_ids[i], control);
    matched.push_back(control);
  }
  const Eigen::VectorXd scale = smd_scale(table, treated_ids, control_ids);
  res.smd_before = standardized_differences(table, treated_ids, control_ids, scale);
  res.smd_after = standardized_differences(table, treated_ids, matched, scale);
  res.treated_mean = table.select(treated_ids).colwise().mean().transpose();
  res.matched_mean = table.select(matched).colwise().mean().transpose();
  res.pool_mean = table.select(control_ids).colwise().mean().transpose();
  return res;
}

}  // namespace mdid::matching

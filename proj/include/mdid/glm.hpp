#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mdid/core_data.hpp"
#include "mdid/design.hpp"

namespace mdid::glm {

struct FitOptions {
  int max_iterations = 50;
  double score_tolerance = 1e-8;
  double relative_deviance_tolerance = 1e-10;
  // Warm start; defaults to zeros with the intercept at logit(mean y).
  std::optional<Eigen::VectorXd> start;
  // Rank-check the weighted Gram matrix before iterating.
  bool check_identifiability = true;
};

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares (Newton steps with step halving).
//
// Converges when max |score| < score_tolerance or the relative deviance change
// drops below relative_deviance_tolerance. Throws:
//   SeparationError       outcome without variation, or fitted probabilities
//                         pinned at 0/1 while coefficients keep growing;
//   NonIdentifiableError  rank-deficient design (names the offending columns);
//   ConvergenceError      no convergence within max_iterations.
// A numerically singular Newton system gets a 1e-10 ridge and a warning.
FitResult fit_logistic(const DesignMatrix& design, const FitOptions& options = {});

// Liang-Zeger sandwich B^-1 M B^-1 * G/(G-1), M = sum_g s_g s_g'. Requires at
// least two clusters with observations.
Eigen::MatrixXd cluster_robust_covariance(const FitResult& fit, const DesignMatrix& design);

Eigen::VectorXd linear_predictor(const DesignMatrix& design, const Eigen::VectorXd& beta);
Eigen::VectorXd fitted_probabilities(const DesignMatrix& design, const Eigen::VectorXd& beta);

// Inference for one coefficient. Robust tests use a t reference with G-1
// degrees of freedom; naive tests use the standard normal.
struct WaldSummary {
  std::string name;
  double estimate = 0;
  double naive_se = 0;
  double robust_se = 0;
  double statistic = 0;  // estimate / robust_se
  double df = 0;         // G - 1
  double p_value = 1;
  double ci_low = 0;
  double ci_high = 0;
  double odds_ratio = 1;
  double or_ci_low = 1;
  double or_ci_high = 1;
};

WaldSummary summarize(const FitResult& fit, std::string_view name, double alpha = 0.05);
// One row per coefficient; uses the robust covariance when present.
std::vector<WaldSummary> coefficient_table(const FitResult& fit, double alpha = 0.05);

// Two-sided p-value and quantile helpers on Student's t.
double t_two_sided_p(double statistic, double df);
double t_quantile(double prob, double df);
double normal_two_sided_p(double z);

struct PairedTTest {
  double t = 0;
  double df = 0;
  double p_value = 1;
  double ci_low = 0;
  double ci_high = 0;
  double mean_diff = 0;
};

// d = x - y; t = mean(d) / (sd(d)/sqrt(n)) on n-1 degrees of freedom.
// Throws ValidationError on length mismatch or n < 2, DegenerateError when all
// differences are identical.
PairedTTest paired_t_test(std::span<const double> x, std::span<const double> y);

}  // namespace mdid::glm

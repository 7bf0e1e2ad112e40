#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference in
// `serial::` and an OpenMP version in `omp::`; the library calls the OpenMP
// versions and the tests hold them to the serial results.
//
// The OpenMP kernels split rows into fixed-size chunks and combine chunk
// partials in chunk order, so their output does not depend on the thread
// count.

#include <cmath>

#include <Eigen/Dense>

#include "mdid/design.hpp"

namespace mdid::kernels {

// Log-likelihood, score and Fisher information of a weighted logistic model.
struct NormalEquations {
  Eigen::MatrixXd information;
  Eigen::VectorXd score;
  double log_likelihood = 0;
  double min_prob = 1;  // over rows with positive weight
  double max_prob = 0;
};

inline double inv_logit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
inline double log1p_exp(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

namespace serial {

NormalEquations accumulate(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
// G x p matrix whose row g is the summed score of cluster g.
Eigen::MatrixXd cluster_scores(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
// Weighted X'X (frequency weights only).
Eigen::MatrixXd gram(const glm::DesignMatrix& design);
Eigen::VectorXd linear_predictor(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
// sqrt((a_i - b_j)' inv_cov (a_i - b_j)) for every row pair.
Eigen::MatrixXd mahalanobis(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& inv_cov);

}  // namespace serial

namespace omp {

NormalEquations accumulate(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
Eigen::MatrixXd cluster_scores(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
Eigen::MatrixXd gram(const glm::DesignMatrix& design);
Eigen::VectorXd linear_predictor(const glm::DesignMatrix& design, const Eigen::VectorXd& beta);
// Whitens both sides with the Cholesky factor of inv_cov, then takes
// Euclidean distances cell by cell.
Eigen::MatrixXd mahalanobis(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& inv_cov);

}  // namespace omp

}  // namespace mdid::kernels

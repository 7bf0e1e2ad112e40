#include "mdid/kernels.hpp"

namespace mdid::kernels::serial {

namespace {

double row_eta(const glm::DesignMatrix& d, std::size_t r, const Eigen::VectorXd& beta) {
  double eta = d.offset[r];
  auto c = d.row_columns(r);
  auto v = d.row_values(r);
  for (std::size_t k = 0; k < c.size(); ++k) eta += v[k] * beta(c[k]);
  return eta;
}

}  // namespace

NormalEquations accumulate(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  const auto p = static_cast<Eigen::Index>(d.cols());
  NormalEquations ne;
  ne.information = Eigen::MatrixXd::Zero(p, p);
  ne.score = Eigen::VectorXd::Zero(p);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double w = d.weight[r];
    if (w == 0) continue;
    const double eta = row_eta(d, r, beta);
    const double mu = inv_logit(eta);
    ne.min_prob = std::min(ne.min_prob, mu);
    ne.max_prob = std::max(ne.max_prob, mu);
    ne.log_likelihood += w * (d.y[r] * eta - log1p_exp(eta));
    const double resid = w * (d.y[r] - mu);
    const double curv = w * mu * (1.0 - mu);
    auto c = d.row_columns(r);
    auto v = d.row_values(r);
    for (std::size_t a = 0; a < c.size(); ++a) {
      ne.score(c[a]) += resid * v[a];
      for (std::size_t b = 0; b < c.size(); ++b) {
        ne.information(c[a], c[b]) += curv * v[a] * v[b];
      }
    }
  }
  return ne;
}

Eigen::MatrixXd cluster_scores(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.cluster_names.size()),
                                            static_cast<Eigen::Index>(d.cols()));
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const double resid = d.weight[r] * (d.y[r] - inv_logit(row_eta(d, r, beta)));
    auto c = d.row_columns(r);
    auto v = d.row_values(r);
    for (std::size_t k = 0; k < c.size(); ++k) s(d.cluster[r], c[k]) += resid * v[k];
  }
  return s;
}

Eigen::MatrixXd gram(const glm::DesignMatrix& d) {
  const auto p = static_cast<Eigen::Index>(d.cols());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    auto c = d.row_columns(r);
    auto v = d.row_values(r);
    for (std::size_t a = 0; a < c.size(); ++a) {
      for (std::size_t b = 0; b < c.size(); ++b) g(c[a], c[b]) += d.weight[r] * v[a] * v[b];
    }
  }
  return g;
}

Eigen::VectorXd linear_predictor(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta(static_cast<Eigen::Index>(d.rows()));
  for (std::size_t r = 0; r < d.rows(); ++r) eta(static_cast<Eigen::Index>(r)) = row_eta(d, r, beta);
  return eta;
}

Eigen::MatrixXd mahalanobis(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& inv_cov) {
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const Eigen::VectorXd diff = (a.row(i) - b.row(j)).transpose();
      const double q = diff.dot(inv_cov * diff);
      out(i, j) = std::sqrt(std::max(q, 0.0));
    }
  }
  return out;
}

}  // namespace mdid::kernels::serial

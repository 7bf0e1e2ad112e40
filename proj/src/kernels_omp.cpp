#include "mdid/kernels.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include <omp.h>

namespace mdid::kernels::omp {

namespace {

constexpr std::size_t kChunkRows = 2048;

std::size_t chunk_count(std::size_t rows) { return (rows + kChunkRows - 1) / kChunkRows; }

struct Partial {
  Eigen::MatrixXd information;
  Eigen::VectorXd score;
  double log_likelihood = 0;
  double min_prob = 1;
  double max_prob = 0;
};

inline double row_eta(const glm::DesignMatrix& d, std::size_t r, const double* beta) {
  double eta = d.offset[r];
  const std::size_t begin = d.row_start[r];
  const std::size_t end = d.row_start[r + 1];
  for (std::size_t k = begin; k < end; ++k) eta += d.value[k] * beta[d.col_index[k]];
  return eta;
}

}  // namespace

NormalEquations accumulate(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  const auto p = static_cast<Eigen::Index>(d.cols());
  const std::size_t n_chunks = chunk_count(d.rows());
  std::vector<Partial> partials(n_chunks);
  const double* b = beta.data();

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ch = 0; ch < n_chunks; ++ch) {
    Partial& part = partials[ch];
    part.information = Eigen::MatrixXd::Zero(p, p);
    part.score = Eigen::VectorXd::Zero(p);
    double* info = part.information.data();
    const std::size_t lo = ch * kChunkRows;
    const std::size_t hi = std::min(d.rows(), lo + kChunkRows);
    for (std::size_t r = lo; r < hi; ++r) {
      const double w = d.weight[r];
      if (w == 0) continue;
      const double eta = row_eta(d, r, b);
      const double mu = inv_logit(eta);
      part.min_prob = std::min(part.min_prob, mu);
      part.max_prob = std::max(part.max_prob, mu);
      part.log_likelihood += w * (d.y[r] * eta - log1p_exp(eta));
      const double resid = w * (d.y[r] - mu);
      const double curv = w * mu * (1.0 - mu);
      const std::size_t begin = d.row_start[r];
      const std::size_t end = d.row_start[r + 1];
      for (std::size_t ka = begin; ka < end; ++ka) {
        const int ca = d.col_index[ka];
        const double va = d.value[ka];
        part.score(ca) += resid * va;
        const double cva = curv * va;
        // Upper triangle only (column-major: element (i,j) at j*p+i, i<=j).
        for (std::size_t kb = begin; kb < end; ++kb) {
          const int cb = d.col_index[kb];
          if (ca <= cb) info[static_cast<std::size_t>(cb) * p + ca] += cva * d.value[kb];
        }
      }
    }
  }

  NormalEquations ne;
  ne.information = Eigen::MatrixXd::Zero(p, p);
  ne.score = Eigen::VectorXd::Zero(p);
  for (const auto& part : partials) {
    ne.information += part.information;
    ne.score += part.score;
    ne.log_likelihood += part.log_likelihood;
    ne.min_prob = std::min(ne.min_prob, part.min_prob);
    ne.max_prob = std::max(ne.max_prob, part.max_prob);
  }
  ne.information.triangularView<Eigen::StrictlyLower>() =
      ne.information.transpose().triangularView<Eigen::StrictlyLower>();
  return ne;
}

Eigen::MatrixXd cluster_scores(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  const auto g = static_cast<Eigen::Index>(d.cluster_names.size());
  const auto p = static_cast<Eigen::Index>(d.cols());
  const std::size_t n_chunks = chunk_count(d.rows());
  std::vector<Eigen::MatrixXd> partials(n_chunks);
  const double* b = beta.data();

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ch = 0; ch < n_chunks; ++ch) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(g, p);
    const std::size_t lo = ch * kChunkRows;
    const std::size_t hi = std::min(d.rows(), lo + kChunkRows);
    for (std::size_t r = lo; r < hi; ++r) {
      const double resid = d.weight[r] * (d.y[r] - inv_logit(row_eta(d, r, b)));
      for (std::size_t k = d.row_start[r]; k < d.row_start[r + 1]; ++k) {
        s(d.cluster[r], d.col_index[k]) += resid * d.value[k];
      }
    }
    partials[ch] = std::move(s);
  }

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g, p);
  for (const auto& s : partials) out += s;
  return out;
}

Eigen::MatrixXd gram(const glm::DesignMatrix& d) {
  const auto p = static_cast<Eigen::Index>(d.cols());
  const std::size_t n_chunks = chunk_count(d.rows());
  std::vector<Eigen::MatrixXd> partials(n_chunks);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ch = 0; ch < n_chunks; ++ch) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
    const std::size_t lo = ch * kChunkRows;
    const std::size_t hi = std::min(d.rows(), lo + kChunkRows);
    for (std::size_t r = lo; r < hi; ++r) {
      const double w = d.weight[r];
      for (std::size_t ka = d.row_start[r]; ka < d.row_start[r + 1]; ++ka) {
        for (std::size_t kb = d.row_start[r]; kb < d.row_start[r + 1]; ++kb) {
          g(d.col_index[ka], d.col_index[kb]) += w * d.value[ka] * d.value[kb];
        }
      }
    }
    partials[ch] = std::move(g);
  }

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (const auto& g : partials) out += g;
  return out;
}

Eigen::VectorXd linear_predictor(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  const auto n = static_cast<std::ptrdiff_t>(d.rows());
  Eigen::VectorXd eta(n);
  const double* b = beta.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) eta(r) = row_eta(d, static_cast<std::size_t>(r), b);
  return eta;
}

Eigen::MatrixXd mahalanobis(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& inv_cov) {
  // inv_cov = L L'  =>  q(x) = |L' x|^2.
  const Eigen::LLT<Eigen::MatrixXd> llt(inv_cov);
  const Eigen::MatrixXd lt = llt.matrixU();
  const Eigen::MatrixXd wa = a * lt.transpose();
  const Eigen::MatrixXd wb = b * lt.transpose();
  const auto n_a = static_cast<std::ptrdiff_t>(a.rows());
  const auto n_b = static_cast<std::ptrdiff_t>(b.rows());
  Eigen::MatrixXd out(n_a, n_b);

#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t i = 0; i < n_a; ++i) {
    for (std::ptrdiff_t j = 0; j < n_b; ++j) {
      out(i, j) = (wa.row(i) - wb.row(j)).norm();
    }
  }
  return out;
}

}  // namespace mdid::kernels::omp

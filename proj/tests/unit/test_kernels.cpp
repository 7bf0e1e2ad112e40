#include <gtest/gtest.h>
#include <omp.h>

#include "mdid/kernels.hpp"
#include "test_support.hpp"

using namespace mdid;

namespace {

Eigen::VectorXd some_beta(std::size_t p) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = 0.1 * std::sin(1.0 + j);
  return b;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

// Sizes straddle the chunk length so partial chunks are exercised.
class KernelAgreement : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelAgreement, OmpMatchesSerial) {
  const auto d = support::random_design(GetParam(), GetParam(), 7, 5);
  const auto beta = some_beta(d.cols());
  const auto s = kernels::serial::accumulate(d, beta);
  const auto o = kernels::omp::accumulate(d, beta);
  EXPECT_LT(rel_err(o.information, s.information), 1e-12);
  EXPECT_LT(rel_err(o.score, s.score), 1e-12);
  EXPECT_NEAR(o.log_likelihood, s.log_likelihood, 1e-9 * std::abs(s.log_likelihood));
  EXPECT_DOUBLE_EQ(o.min_prob, s.min_prob);
  EXPECT_DOUBLE_EQ(o.max_prob, s.max_prob);
  EXPECT_LT(rel_err(kernels::omp::cluster_scores(d, beta), kernels::serial::cluster_scores(d, beta)), 1e-12);
  EXPECT_LT(rel_err(kernels::omp::gram(d), kernels::serial::gram(d)), 1e-12);
  EXPECT_LT(rel_err(kernels::omp::linear_predictor(d, beta), kernels::serial::linear_predictor(d, beta)), 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Sizes, KernelAgreement, ::testing::Values(1, 17, 2047, 2048, 2049, 9000));

TEST(Kernels, SerialMatchesDenseFormulas) {
  const auto d = support::random_design(3, 300, 5, 3);
  const auto beta = some_beta(d.cols());
  const Eigen::MatrixXd x = d.dense();
  const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), static_cast<Eigen::Index>(d.rows()));
  const Eigen::Map<const Eigen::VectorXd> w(d.weight.data(), static_cast<Eigen::Index>(d.rows()));
  const Eigen::VectorXd eta = x * beta;
  const Eigen::VectorXd p = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  const Eigen::VectorXd score = x.transpose() * w.cwiseProduct(y - p);
  const Eigen::MatrixXd info =
      x.transpose() * w.cwiseProduct(p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p)).asDiagonal() * x;
  double ll = 0;
  for (Eigen::Index r = 0; r < p.size(); ++r) ll += w(r) * (y(r) * std::log(p(r)) + (1 - y(r)) * std::log(1 - p(r)));
  const auto s = kernels::serial::accumulate(d, beta);
  EXPECT_LT(rel_err(s.score, score), 1e-12);
  EXPECT_LT(rel_err(s.information, info), 1e-12);
  EXPECT_NEAR(s.log_likelihood, ll, 1e-9 * std::abs(ll));
  EXPECT_LT(rel_err(kernels::serial::gram(d), x.transpose() * w.asDiagonal() * x), 1e-12);
}

TEST(Kernels, OmpResultIndependentOfThreadCount) {
  const auto d = support::random_design(5, 20000, 9, 6);
  const auto beta = some_beta(d.cols());
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = kernels::omp::accumulate(d, beta);
  const auto g1 = kernels::omp::cluster_scores(d, beta);
  omp_set_num_threads(4);
  const auto four = kernels::omp::accumulate(d, beta);
  const auto g4 = kernels::omp::cluster_scores(d, beta);
  omp_set_num_threads(saved);
  EXPECT_EQ(one.information, four.information);
  EXPECT_EQ(one.score, four.score);
  EXPECT_EQ(one.log_likelihood, four.log_likelihood);
  EXPECT_EQ(g1, g4);
}

TEST(Kernels, MahalanobisAgreesWithQuadraticForm) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(13, 4), b(21, 4), m(30, 4);
  for (auto* mat : {&a, &b, &m}) {
    for (Eigen::Index i = 0; i < mat->size(); ++i) mat->data()[i] = normal(rng);
  }
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd inv_cov = (centered.transpose() * centered / 29.0).inverse();
  const auto s = kernels::serial::mahalanobis(a, b, inv_cov);
  const auto o = kernels::omp::mahalanobis(a, b, inv_cov);
  ASSERT_EQ(s.rows(), 13);
  ASSERT_EQ(s.cols(), 21);
  for (Eigen::Index i = 0; i < 13; ++i) {
    for (Eigen::Index j = 0; j < 21; ++j) {
      const Eigen::VectorXd diff = (a.row(i) - b.row(j)).transpose();
      const double direct = std::sqrt(diff.dot(inv_cov * diff));
      EXPECT_NEAR(s(i, j), direct, 1e-12);
      EXPECT_NEAR(o(i, j), direct, 1e-10);
    }
  }
}

TEST(Kernels, StableLogistic) {
  EXPECT_DOUBLE_EQ(kernels::inv_logit(0), 0.5);
  EXPECT_GT(kernels::inv_logit(-800), -1e-300);
  EXPECT_DOUBLE_EQ(kernels::inv_logit(800), 1.0);
  EXPECT_NEAR(kernels::log1p_exp(800), 800, 1e-12);
  EXPECT_NEAR(kernels::log1p_exp(0), std::log(2.0), 1e-15);
}

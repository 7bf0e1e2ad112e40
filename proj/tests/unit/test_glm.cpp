#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mdid/errors.hpp"
#include "mdid/glm.hpp"
#include "mdid/kernels.hpp"
#include "test_support.hpp"

using namespace mdid;

namespace {

// 100 unexposed with 10 events, 100 exposed with 30 events.
glm::DesignMatrix two_by_two(bool aggregated) {
  std::vector<std::vector<double>> x;
  std::vector<double> y, w;
  std::vector<int> c;
  auto add = [&](double exposed, double outcome, int n) {
    if (aggregated) {
      x.push_back({1, exposed});
      y.push_back(outcome);
      w.push_back(n);
      c.push_back(static_cast<int>(y.size() - 1));
      return;
    }
    for (int i = 0; i < n; ++i) {
      x.push_back({1, exposed});
      y.push_back(outcome);
      w.push_back(1);
      c.push_back(static_cast<int>(y.size() % 10));
    }
  };
  add(0, 1, 10);
  add(0, 0, 90);
  add(1, 1, 30);
  add(1, 0, 70);
  return support::design_from(x, y, c, w);
}

Eigen::VectorXd probabilities(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  return glm::fitted_probabilities(d, beta);
}

// B^-1 (sum_g s_g s_g') B^-1 * G/(G-1), spelled out on the dense matrix.
Eigen::MatrixXd sandwich_by_hand(const glm::DesignMatrix& d, const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd x = d.dense();
  const Eigen::VectorXd p = probabilities(d, beta);
  const auto p_cols = x.cols();
  Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(p_cols, p_cols);
  int g_count = 0;
  for (int c : d.cluster) g_count = std::max(g_count, c + 1);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(g_count, p_cols);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double w = d.weight[static_cast<std::size_t>(r)];
    bread += w * p(r) * (1 - p(r)) * x.row(r).transpose() * x.row(r);
    s.row(d.cluster[static_cast<std::size_t>(r)]) += w * (d.y[static_cast<std::size_t>(r)] - p(r)) * x.row(r);
  }
  const Eigen::MatrixXd meat = s.transpose() * s;
  const Eigen::MatrixXd inv = bread.inverse();
  return inv * meat * inv * (static_cast<double>(g_count) / (g_count - 1));
}

}  // namespace

TEST(FitLogistic, TwoByTwoClosedForm) {
  for (bool aggregated : {false, true}) {
    const auto d = two_by_two(aggregated);
    const auto fit = glm::fit_logistic(d);
    const double log_or = std::log((30.0 / 70.0) / (10.0 / 90.0));
    EXPECT_NEAR(fit.coefficients(1), log_or, 1e-8);
    EXPECT_NEAR(fit.coefficients(1), 1.3499267169490159, 1e-8);
    EXPECT_NEAR(fit.coefficients(0), std::log(10.0 / 90.0), 1e-8);
    // Woolf standard error of the log odds ratio.
    EXPECT_NEAR(fit.naive_se("x1"), std::sqrt(1 / 30.0 + 1 / 70.0 + 1 / 10.0 + 1 / 90.0), 1e-8);
    EXPECT_TRUE(fit.converged);
    EXPECT_LE(fit.iterations, 25);
    EXPECT_LT(fit.max_abs_score, 1e-6);
    EXPECT_EQ(fit.n_obs, 200);
  }
}

TEST(FitLogistic, FrequencyWeightsEqualReplication) {
  const auto a = glm::fit_logistic(two_by_two(true));
  const auto b = glm::fit_logistic(two_by_two(false));
  EXPECT_LT((a.coefficients - b.coefficients).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((a.naive_covariance - b.naive_covariance).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitLogistic, WarmStartAtOptimumNeedsNoIterations) {
  const auto d = two_by_two(true);
  const auto first = glm::fit_logistic(d);
  glm::FitOptions opt;
  opt.start = first.coefficients;
  const auto again = glm::fit_logistic(d, opt);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_TRUE(again.converged);
}

TEST(FitLogistic, ScoreSmallOnRandomDesigns) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto d = support::random_design(seed, 3000, 8, 4);
    const auto fit = glm::fit_logistic(d);
    EXPECT_TRUE(fit.converged);
    EXPECT_LE(fit.iterations, 25);
    EXPECT_LT(kernels::serial::accumulate(d, fit.coefficients).score.cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(FitLogistic, ShiftingContinuousColumnLeavesProbabilities) {
  const auto d = support::random_design(4, 2000, 6, 3);
  auto shifted = d;
  const int xcol = static_cast<int>(d.cols()) - 1;
  for (std::size_t k = 0; k < shifted.value.size(); ++k) {
    if (shifted.col_index[k] == xcol) shifted.value[k] += 7.5;
  }
  const auto a = glm::fit_logistic(d);
  const auto b = glm::fit_logistic(shifted);
  EXPECT_NEAR(a.coefficients(xcol), b.coefficients(xcol), 1e-8);
  EXPECT_LT((probabilities(d, a.coefficients) - probabilities(shifted, b.coefficients)).cwiseAbs().maxCoeff(),
            1e-8);
}

TEST(FitLogistic, NoOutcomeVariationIsSeparation) {
  auto d = support::design_from({{1, 0}, {1, 1}, {1, 2}, {1, 3}}, {0, 0, 0, 0}, {0, 1, 0, 1});
  EXPECT_THROW(glm::fit_logistic(d), SeparationError);
}

TEST(FitLogistic, PerfectPredictorIsSeparation) {
  auto d = support::design_from({{1, -2}, {1, -1}, {1, -0.5}, {1, 0.5}, {1, 1}, {1, 2}}, {0, 0, 0, 1, 1, 1},
                                {0, 1, 0, 1, 0, 1});
  EXPECT_THROW(glm::fit_logistic(d), SeparationError);
}

TEST(FitLogistic, CollinearColumnsAreNonIdentifiable) {
  auto d = support::design_from({{1, 1, 2}, {1, 2, 4}, {1, 3, 6}, {1, 4, 8}, {1, 5, 10}},
                                {0, 1, 0, 1, 1}, {0, 1, 0, 1, 0});
  EXPECT_THROW(glm::fit_logistic(d), NonIdentifiableError);
  auto empty = support::design_from({{1, 0}, {1, 0}, {1, 0}, {1, 0}}, {0, 1, 0, 1}, {0, 1, 0, 1});
  EXPECT_THROW(glm::fit_logistic(empty), NonIdentifiableError);
}

TEST(ClusterRobust, SingletonClustersEqualHC0) {
  const auto base = support::random_design(8, 400, 1, 2);
  auto d = base;
  d.cluster_names.clear();
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d.cluster[r] = d.add_cluster("r" + std::to_string(r));
    d.weight[r] = 1;
  }
  const auto fit = glm::fit_logistic(d);
  const auto robust = glm::cluster_robust_covariance(fit, d);

  const Eigen::MatrixXd x = d.dense();
  const Eigen::VectorXd p = probabilities(d, fit.coefficients);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double e = d.y[static_cast<std::size_t>(r)] - p(r);
    meat += e * e * x.row(r).transpose() * x.row(r);
  }
  const double n = static_cast<double>(d.rows());
  const Eigen::MatrixXd hc0 = fit.naive_covariance * meat * fit.naive_covariance;
  EXPECT_LT((robust - hc0 * n / (n - 1)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ClusterRobust, TwoClusterHandExample) {
  const auto d = support::design_from({{1, 0}, {1, 1}, {1, 2}, {1, 0}, {1, 1}, {1, 2}}, {0, 1, 0, 1, 0, 1},
                                      {0, 0, 0, 1, 1, 1});
  const auto fit = glm::fit_logistic(d);
  const auto robust = glm::cluster_robust_covariance(fit, d);
  EXPECT_LT((robust - sandwich_by_hand(d, fit.coefficients)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ClusterRobust, DuplicatingRowsHalvesNaiveOnly) {
  const auto d = support::random_design(12, 500, 6, 2);
  auto doubled = d;
  for (auto& w : doubled.weight) w *= 2;
  const auto a = glm::fit_logistic(d);
  const auto b = glm::fit_logistic(doubled);
  const auto ra = glm::cluster_robust_covariance(a, d);
  const auto rb = glm::cluster_robust_covariance(b, doubled);
  EXPECT_LT((b.naive_covariance - a.naive_covariance / 2).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((rb - ra).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ClusterRobust, CovariancesArePositiveSemidefinite) {
  for (std::uint64_t seed = 30; seed < 40; ++seed) {
    const auto d = support::random_design(seed, 1500, 5, 3);
    const auto fit = glm::fit_logistic(d);
    const auto robust = glm::cluster_robust_covariance(fit, d);
    for (const Eigen::MatrixXd* m : {&fit.naive_covariance, &robust}) {
      EXPECT_LT((*m - m->transpose()).cwiseAbs().maxCoeff(), 1e-12);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*m);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(ClusterRobust, SingleClusterIsDegenerate) {
  const auto d = support::random_design(2, 300, 1, 2);
  const auto fit = glm::fit_logistic(d);
  EXPECT_THROW(glm::cluster_robust_covariance(fit, d), DegenerateError);
}

TEST(Summarize, UsesRobustSeAndClusterDf) {
  const auto d = support::random_design(21, 2000, 10, 3);
  auto fit = glm::fit_logistic(d);
  fit.robust_covariance = glm::cluster_robust_covariance(fit, d);
  const auto s = glm::summarize(fit, "x", 0.05);
  const auto j = static_cast<Eigen::Index>(fit.index_of("x"));
  EXPECT_DOUBLE_EQ(s.robust_se, std::sqrt(fit.robust_covariance(j, j)));
  EXPECT_DOUBLE_EQ(s.statistic, s.estimate / s.robust_se);
  EXPECT_EQ(s.df, 9);
  EXPECT_NEAR(s.p_value, glm::t_two_sided_p(s.statistic, 9), 1e-15);
  EXPECT_NEAR(s.odds_ratio, std::exp(s.estimate), 1e-12);
  EXPECT_NEAR(s.or_ci_low, std::exp(s.ci_low), 1e-12);
  EXPECT_NEAR(s.ci_high - s.estimate, glm::t_quantile(0.975, 9) * s.robust_se, 1e-12);
}

TEST(TDistribution, ClosedFormsForTwoDegreesOfFreedom) {
  // For 2 df the CDF is 1/2 + t / (2 sqrt(t^2 + 2)).
  for (double t : {0.0, 0.5, 1.7, 3.4641016151377544}) {
    EXPECT_NEAR(glm::t_two_sided_p(t, 2), 1 - t / std::sqrt(t * t + 2), 1e-12);
  }
  // Inverting it: t = (2p - 1) sqrt(2 / (1 - (2p - 1)^2)).
  EXPECT_NEAR(glm::t_quantile(0.975, 2), 0.95 * std::sqrt(2 / (1 - 0.95 * 0.95)), 1e-12);
  EXPECT_NEAR(glm::normal_two_sided_p(1.959963984540054), 0.05, 1e-12);
}

TEST(PairedTTest, ZeroMeanDifference) {
  std::vector<double> x{1, 2, 3}, y{0, 2, 4};
  const auto r = glm::paired_t_test(x, y);
  EXPECT_DOUBLE_EQ(r.t, 0);
  EXPECT_DOUBLE_EQ(r.p_value, 1);
  EXPECT_DOUBLE_EQ(r.df, 2);
  EXPECT_NEAR(r.ci_low, -r.ci_high, 1e-15);
}

TEST(PairedTTest, HandComputedCase) {
  // d = (1, 2, 3): mean 2, sd 1, t = 2 sqrt(3).
  std::vector<double> x{1, 2, 3}, y{0, 0, 0};
  const auto r = glm::paired_t_test(x, y);
  const double t = 2 * std::sqrt(3.0);
  EXPECT_NEAR(r.t, t, 1e-12);
  EXPECT_NEAR(r.p_value, 1 - t / std::sqrt(t * t + 2), 1e-12);
  EXPECT_NEAR(r.ci_high, 2 + 4.302652729911275 / std::sqrt(3.0), 1e-9);
  EXPECT_DOUBLE_EQ(r.mean_diff, 2);
}

TEST(PairedTTest, AntisymmetricAndDfFromPairs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(23), y(23);
    for (int i = 0; i < 23; ++i) {
      x[i] = normal(rng);
      y[i] = normal(rng);
    }
    const auto a = glm::paired_t_test(x, y);
    const auto b = glm::paired_t_test(y, x);
    EXPECT_EQ(a.t, -b.t);
    EXPECT_EQ(a.df, 22);
    EXPECT_NEAR(a.p_value, b.p_value, 1e-15);
  }
}

TEST(PairedTTest, DegenerateAndInvalidInputs) {
  std::vector<double> x{2, 3, 4}, y{1, 2, 3};
  EXPECT_THROW(glm::paired_t_test(x, y), DegenerateError);
  std::vector<double> one{1}, other{2};
  EXPECT_THROW(glm::paired_t_test(one, other), ValidationError);
  std::vector<double> shorter{1, 2};
  EXPECT_THROW(glm::paired_t_test(x, shorter), ValidationError);
}

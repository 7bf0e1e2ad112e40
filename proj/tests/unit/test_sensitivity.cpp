#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mdid/did.hpp"
#include "mdid/errors.hpp"
#include "mdid/glm.hpp"
#include "mdid/sensitivity.hpp"
#include "mdid/synthgen.hpp"
#include "test_support.hpp"

using namespace mdid;
using namespace mdid::sensitivity;

namespace {

StudyConfig short_config() {
  StudyConfig cfg;
  cfg.pre_period = {1986, 1989};
  cfg.baseline_years = {1987, 1989};
  cfg.pseudo_treated_period = {1988, 1989};
  cfg.post_period = {1999, 2002};
  return cfg;
}

synthgen::GeneratorSpec short_spec(std::uint64_t seed) {
  synthgen::GeneratorSpec s;
  s.n_treated = 6;
  s.n_control = 6;
  s.pre_period = {1986, 1989};
  s.baseline_years = {1987, 1989};
  s.post_period = {1999, 2002};
  s.births_per_cell = 200;
  s.rng_seed = seed;
  return s;
}

struct Study {
  synthgen::SimulatedStudy sim;
  did::DoseAssignment dose;
};

Study make_study(const synthgen::GeneratorSpec& spec, const StudyConfig& cfg) {
  Study s{synthgen::generate_panel(spec), {}};
  s.dose = did::compute_doses(s.sim.panels, s.sim.treated_ids, s.sim.control_ids, cfg);
  return s;
}

// Small base design with an intercept and one covariate.
glm::DesignMatrix tiny_base() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<int> c;
  for (int i = 0; i < 400; ++i) {
    const double v = unit(rng) * 2 - 1;
    const bool w = i % 2 == 0 && unit(rng) < 0.6;
    const double eta = -0.3 + 0.8 * v + (w ? 1.1 : 0.0);
    x.push_back({1, v});
    y.push_back(unit(rng) < 1 / (1 + std::exp(-eta)) ? 1 : 0);
    c.push_back(i % 8);
  }
  return support::design_from(x, y, c);
}

std::vector<double> tiny_pi(std::size_t n) {
  std::vector<double> pi(n, 0.0);
  for (std::size_t i = 0; i < n; i += 2) pi[i] = 0.6;
  return pi;
}

}  // namespace

TEST(DesignEffect, ScalesByRobustOverNaive) {
  EXPECT_DOUBLE_EQ(design_effect_adjust(4, 2, 3), 6);
  EXPECT_THROW(design_effect_adjust(1, 0, 1), ValidationError);
  EXPECT_THROW(design_effect_adjust(-1, 1, 1), ValidationError);
}

TEST(Mixture, LogLikelihoodByHand) {
  const auto base = tiny_base();
  const auto pi = tiny_pi(base.rows());
  Eigen::Vector3d beta(-0.2, 0.5, 0.9);
  double expected = 0;
  for (std::size_t r = 0; r < base.rows(); ++r) {
    const double v = base.dense()(static_cast<Eigen::Index>(r), 1);
    auto f = [&](double eta) {
      const double p = 1 / (1 + std::exp(-eta));
      return base.y[r] == 1 ? p : 1 - p;
    };
    expected += std::log(pi[r] * f(-0.2 + 0.5 * v + 0.9) + (1 - pi[r]) * f(-0.2 + 0.5 * v));
  }
  EXPECT_NEAR(mixture_log_likelihood(base, pi, LatentEffect{}, beta), expected, 1e-9);
}

TEST(Mixture, LogLikelihoodNeverDecreases) {
  const auto base = tiny_base();
  const auto pi = tiny_pi(base.rows());
  Eigen::Vector3d start(0, 0, 0);
  const auto fit = fit_latent_mixture(base, pi, LatentEffect{}, start);
  ASSERT_GE(fit.log_likelihood_trace.size(), 2u);
  for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k) {
    EXPECT_GE(fit.log_likelihood_trace[k], fit.log_likelihood_trace[k - 1] - 1e-9) << "step " << k;
  }
  EXPECT_TRUE(fit.converged);
}

TEST(Mixture, LouisInformationMatchesNumericalHessian) {
  const auto base = tiny_base();
  const auto pi = tiny_pi(base.rows());
  const auto fit = fit_latent_mixture(base, pi, LatentEffect{}, Eigen::Vector3d::Zero());
  const Eigen::VectorXd b = fit.coefficients;
  const double h = 1e-4;
  Eigen::Matrix3d hess;
  auto ll = [&](const Eigen::VectorXd& v) { return mixture_log_likelihood(base, pi, LatentEffect{}, v); };
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd pp = b, pm = b, mp = b, mm = b;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      hess(i, j) = (ll(pp) - ll(pm) - ll(mp) + ll(mm)) / (4 * h * h);
    }
  }
  const Eigen::Matrix3d numeric_cov = (-hess).inverse();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(fit.covariance(i, j), numeric_cov(i, j), 1e-4 * std::abs(numeric_cov(i, i))) << i << "," << j;
    }
  }
}

TEST(LatentExposure, FullExposureReducesToBinaryModel) {
  const auto cfg = short_config();
  auto s = make_study(short_spec(1), cfg);
  for (auto& [key, cell] : s.dose.cells) {
    if (cell.treated_post) cell.dose = 0.05;
  }
  const auto inputs = prepare_latent_exposure(s.sim.births, s.dose, cfg);
  const auto fit = em_latent_exposure(inputs, 20.0);  // theta * D = 1 everywhere
  EXPECT_NEAR(fit.tau, inputs.binary_estimate, 1e-6);
}

TEST(LatentExposure, RejectsInvalidTheta) {
  const auto cfg = short_config();
  const auto s = make_study(short_spec(2), cfg);
  const auto inputs = prepare_latent_exposure(s.sim.births, s.dose, cfg);
  EXPECT_THROW(em_latent_exposure(inputs, 0.0), ValidationError);
  EXPECT_THROW(em_latent_exposure(inputs, 1000.0), ValidationError);
  std::vector<double> grid{1, 1000};
  EXPECT_THROW(theta_grid_report(inputs, grid), ValidationError);
}

TEST(LatentExposure, AllZeroDoseIsNonIdentifiable) {
  const auto cfg = short_config();
  auto s = make_study(short_spec(3), cfg);
  auto inputs = prepare_latent_exposure(s.sim.births, s.dose, cfg);
  std::fill(inputs.data.dose.begin(), inputs.data.dose.end(), 0.0);
  EXPECT_THROW(em_latent_exposure(inputs, 1.0), NonIdentifiableError);
}

TEST(LatentExposure, GridIsSortedAndDeduplicated) {
  const auto cfg = short_config();
  const auto s = make_study(short_spec(4), cfg);
  const auto inputs = prepare_latent_exposure(s.sim.births, s.dose, cfg);
  std::vector<std::string> warnings;
  auto previous = set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  std::vector<double> grid{3, 1, 3, 2};
  const auto fits = theta_grid_report(inputs, grid);
  set_warning_handler(previous);
  ASSERT_EQ(fits.size(), 3u);
  EXPECT_EQ(fits[0].theta, 1);
  EXPECT_EQ(fits[2].theta, 3);
  EXPECT_FALSE(warnings.empty());
  for (const auto& f : fits) {
    EXPECT_TRUE(f.converged);
    for (std::size_t k = 1; k < f.log_likelihood_trace.size(); ++k) {
      EXPECT_GE(f.log_likelihood_trace[k], f.log_likelihood_trace[k - 1] - 1e-9);
    }
    EXPECT_NEAR(f.tau_se * f.tau_se, f.tau_naive_se * f.tau_naive_se * f.design_effect, 1e-12);
    EXPECT_NEAR(f.odds_ratio, std::exp(f.tau), 1e-12);
  }
}

TEST(Confounder, NullSettingsLeaveEstimateUnchanged) {
  const auto cfg = short_config();
  auto spec = short_spec(5);
  spec.effect = 8;
  const auto s = make_study(spec, cfg);
  const auto primary = did::fit_primary_dose_model(s.sim.births, s.dose, cfg);
  for (const ConfounderSpec& c : {ConfounderSpec{0.3, 1.0}, ConfounderSpec{0.0, 3.0}}) {
    const auto r = adjust_for_confounder(primary, c);
    EXPECT_NEAR(r.estimate, primary.effect.estimate, 1e-10);
    EXPECT_NEAR(r.se, primary.effect.robust_se, 1e-8 * primary.effect.robust_se);
  }
}

TEST(Confounder, AdjustmentShrinksTowardNull) {
  const auto cfg = short_config();
  auto spec = short_spec(6);
  spec.effect = 8;
  const auto s = make_study(spec, cfg);
  const auto primary = did::fit_primary_dose_model(s.sim.births, s.dose, cfg);
  double previous = primary.effect.estimate;
  for (double gamma : {1.5, 2.0, 3.0}) {
    const auto r = adjust_for_confounder(primary, {0.3, gamma});
    EXPECT_LT(r.estimate, previous);
    previous = r.estimate;
  }
}

TEST(Confounder, SweepSkippedWhenPrimaryNotSignificant) {
  const auto cfg = short_config();
  const auto s = make_study(short_spec(7), cfg);
  const auto primary = did::fit_primary_dose_model(s.sim.births, s.dose, cfg);
  const auto grid = confounder_grid(std::vector<double>{0.1}, std::vector<double>{1.5});
  const auto report = confounder_sweep(primary, grid, 1e-300);
  EXPECT_TRUE(report.skipped);
  EXPECT_EQ(report.skip_reason, "primary not significant");
  EXPECT_TRUE(report.results.empty());
}

TEST(Confounder, FrontierIsSmallestOddsRatioLosingSignificance) {
  const auto cfg = short_config();
  auto spec = short_spec(8);
  spec.effect = 6;
  const auto s = make_study(spec, cfg);
  const auto primary = did::fit_primary_dose_model(s.sim.births, s.dose, cfg);
  ASSERT_LT(primary.effect.p_value, 0.05);
  std::vector<double> p{0.5}, g{1, 1.5, 2, 3, 5, 8};
  const auto report = confounder_sweep(primary, confounder_grid(p, g));
  ASSERT_FALSE(report.skipped);
  ASSERT_EQ(report.frontier.size(), 1u);
  std::optional<double> expected;
  for (const auto& r : report.results) {
    if (!r.significant && (!expected || r.spec.outcome_or < *expected)) expected = r.spec.outcome_or;
  }
  EXPECT_EQ(report.frontier[0].odds_ratio, expected);
  EXPECT_TRUE(report.results.front().significant);  // Gamma = 1
}

TEST(Confounder, GridIsCartesianProduct) {
  std::vector<double> p{0.1, 0.2}, g{1, 2, 3};
  const auto grid = confounder_grid(p, g);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid[4].prevalence, 0.2);
  EXPECT_EQ(grid[4].outcome_or, 2);
}

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdid/core_data.hpp"
#include "mdid/design.hpp"
#include "mdid/did.hpp"

namespace mdid::sensitivity {

// target_var * robust_var / naive_var. Throws ValidationError unless
// naive_var > 0 and robust_var >= 0.
double design_effect_adjust(double robust_var, double naive_var, double target_var);

// ---------------------------------------------------------------------------
// Latent binary mixture logistic model.
//
// Each row r of a base design carries an unobserved W_r with
// Pr(W_r = 1) = pi_r, and
//   logit Pr(Y=1 | W) = x_r' beta + effect * W_r.
// `effect` is either a free coefficient appended to the design or a known
// constant entering as an offset. Fitted by EM: the E-step computes
// q_r = Pr(W_r = 1 | Y_r); the M-step refits a weighted logistic regression on
// rows duplicated with W = 1 (weight q) and W = 0 (weight 1 - q).
// ---------------------------------------------------------------------------

struct LatentEffect {
  bool free = true;
  std::string name = "tau";  // column name when free
  double fixed_value = 0;    // log odds ratio when not free
};

struct MixtureOptions {
  int max_iterations = 5000;
  double log_likelihood_tolerance = 1e-8;
};

struct MixtureFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  // Inverse observed-data information (Louis' identity).
  Eigen::MatrixXd covariance;
  std::vector<double> log_likelihood_trace;  // observed-data, one per EM step
  int iterations = 0;
  bool converged = false;
};

MixtureFit fit_latent_mixture(const glm::DesignMatrix& base, std::span<const double> pi,
                              const LatentEffect& effect, const Eigen::VectorXd& start,
                              const MixtureOptions& options = {});

// Observed-data log-likelihood sum_r w_r log(pi f1 + (1-pi) f0).
double mixture_log_likelihood(const glm::DesignMatrix& base, std::span<const double> pi,
                              const LatentEffect& effect, const Eigen::VectorXd& coefficients);

// ---------------------------------------------------------------------------
// Latent mother-level exposure: Pr(W=1 | D, T=1) = theta * D.
// ---------------------------------------------------------------------------

struct LatentExposureInputs {
  did::AnalysisData data;  // fixed effects + covariates, no treatment column
  Eigen::VectorXd start;   // binary-model coefficients, treatment last
  double binary_estimate = 0;
  double design_effect = 1;  // from the primary dose model
  double alpha = 0.05;
  int n_clusters = 0;
};

// Fits the primary dose model (for the design effect) and the binary model
// (starting values) once, for reuse across theta values.
LatentExposureInputs prepare_latent_exposure(std::span<const BirthRecord> births,
                                             const did::DoseAssignment& dose,
                                             const StudyConfig& cfg,
                                             const SgaTable* sga_table = nullptr);
// Same, from models already fitted on these births.
LatentExposureInputs prepare_latent_exposure(const did::DidFit& primary, const did::DidFit& binary,
                                             std::span<const BirthRecord> births,
                                             const did::DoseAssignment& dose,
                                             const StudyConfig& cfg,
                                             const SgaTable* sga_table = nullptr);

struct LatentExposureFit {
  double theta = 0;
  double tau = 0;
  double tau_naive_se = 0;
  double tau_se = 0;  // design-effect adjusted
  double odds_ratio = 1;
  double ci_low = 0;
  double ci_high = 0;
  double design_effect = 1;
  int em_iterations = 0;
  bool converged = false;
  double log_likelihood = 0;
  std::vector<double> log_likelihood_trace;
};

// Throws ValidationError when theta * max(D) > 1, NonIdentifiableError when
// every dose is zero.
LatentExposureFit em_latent_exposure(const LatentExposureInputs& inputs, double theta,
                                     const MixtureOptions& options = {});
LatentExposureFit em_latent_exposure(std::span<const BirthRecord> births,
                                     const did::DoseAssignment& dose, double theta,
                                     const StudyConfig& cfg, const SgaTable* sga_table = nullptr);

// One EM fit per distinct theta, ascending. Duplicates are dropped with a
// warning; every theta is validated before any fit starts.
std::vector<LatentExposureFit> theta_grid_report(const LatentExposureInputs& inputs,
                                                 std::span<const double> theta_grid,
                                                 const MixtureOptions& options = {});

// ---------------------------------------------------------------------------
// Unmeasured binary confounder present only in treated post-period cells.
// ---------------------------------------------------------------------------

struct ConfounderSpec {
  double prevalence = 0;  // share of treated-post births with u = 1
  double outcome_or = 1;  // odds ratio of u on the outcome, >= 1
};

struct ConfounderResult {
  ConfounderSpec spec;
  double estimate = 0;
  double se = 0;  // design-effect adjusted
  double statistic = 0;
  double p_value = 1;
  bool significant = false;  // p < alpha with the sign of the original estimate
  int em_iterations = 0;
};

struct FrontierPoint {
  double prevalence = 0;
  // Smallest odds ratio in the grid at which significance is lost.
  std::optional<double> odds_ratio;
};

struct SweepReport {
  bool skipped = false;
  std::string skip_reason;
  double original_estimate = 0;
  std::vector<ConfounderResult> results;
  std::vector<FrontierPoint> frontier;
};

// Adjusts the treatment coefficient of `primary` for each confounder spec by
// refitting with u as a latent binary (offset log Gamma) in treated post
// cells. Skipped when the primary effect is not significant at alpha.
SweepReport confounder_sweep(const did::DidFit& primary, std::span<const ConfounderSpec> grid,
                             double alpha = 0.05, const MixtureOptions& options = {});

ConfounderResult adjust_for_confounder(const did::DidFit& primary, const ConfounderSpec& spec,
                                       double alpha = 0.05, const MixtureOptions& options = {});

std::vector<ConfounderSpec> confounder_grid(std::span<const double> prevalences,
                                            std::span<const double> odds_ratios);

}  // namespace mdid::sensitivity

#include "mdid/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <set>

#include "mdid/errors.hpp"
#include "mdid/glm.hpp"
#include "mdid/kernels.hpp"

namespace mdid::sensitivity {

namespace {

constexpr double kThetaSlack = 1e-12;

double log_bernoulli(double y, double eta) { return y * eta - kernels::log1p_exp(eta); }

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Posterior Pr(W=1 | y) and the row's observed-data log-likelihood.
struct RowPosterior {
  double q = 0;
  double log_lik = 0;
};

RowPosterior posterior(double pi, double y, double eta0, double eta1) {
  const double l0 = pi < 1.0 ? std::log1p(-pi) + log_bernoulli(y, eta0)
                             : -std::numeric_limits<double>::infinity();
  const double l1 = pi > 0.0 ? std::log(pi) + log_bernoulli(y, eta1)
                             : -std::numeric_limits<double>::infinity();
  const double total = log_sum_exp(l0, l1);
  return {pi <= 0.0 ? 0.0 : (pi >= 1.0 ? 1.0 : std::exp(l1 - total)), total};
}

struct Expanded {
  glm::DesignMatrix design;
  std::vector<std::size_t> base_row;
  std::vector<char> w_value;
  int latent_column = -1;
};

Expanded expand(const glm::DesignMatrix& base, std::span<const double> pi, const LatentEffect& effect) {
  Expanded e;
  auto& d = e.design;
  d.names = base.names;
  d.blocks = base.blocks;
  d.cluster_names = base.cluster_names;
  if (effect.free) e.latent_column = d.add_column(effect.name, ColumnBlock::treatment);
  std::vector<glm::Entry> row;
  for (std::size_t r = 0; r < base.rows(); ++r) {
    row.clear();
    auto cols = base.row_columns(r);
    auto vals = base.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) row.push_back({cols[k], vals[k]});
    if (pi[r] < 1.0) {
      d.add_row(row, base.y[r], base.cluster[r], base.weight[r], base.offset[r]);
      e.base_row.push_back(r);
      e.w_value.push_back(0);
    }
    if (pi[r] > 0.0) {
      double off = base.offset[r];
      if (effect.free) {
        row.push_back({e.latent_column, 1.0});
      } else {
        off += effect.fixed_value;
      }
      d.add_row(row, base.y[r], base.cluster[r], base.weight[r], off);
      e.base_row.push_back(r);
      e.w_value.push_back(1);
    }
  }
  return e;
}

double latent_shift(const LatentEffect& effect, const Eigen::VectorXd& beta, Eigen::Index p_base) {
  return effect.free ? beta(p_base) : effect.fixed_value;
}

// E-step over base rows; returns posteriors and the observed log-likelihood.
double e_step(const glm::DesignMatrix& base, std::span<const double> pi, const LatentEffect& effect,
              const Eigen::VectorXd& beta, std::vector<double>& q) {
  const auto p_base = static_cast<Eigen::Index>(base.cols());
  const Eigen::VectorXd eta0 = kernels::omp::linear_predictor(base, beta.head(p_base));
  const double shift = latent_shift(effect, beta, p_base);
  q.resize(base.rows());
  double ll = 0;
  for (std::size_t r = 0; r < base.rows(); ++r) {
    const double e0 = eta0(static_cast<Eigen::Index>(r));
    const RowPosterior post = posterior(pi[r], base.y[r], e0, e0 + shift);
    q[r] = post.q;
    ll += base.weight[r] * post.log_lik;
  }
  return ll;
}

// Observed information by Louis' identity:
//   E[complete information | y] - Var[complete score | y].
Eigen::MatrixXd observed_information(const glm::DesignMatrix& base, std::span<const double> pi,
                                     const LatentEffect& effect, const Eigen::VectorXd& beta) {
  const auto p_base = static_cast<Eigen::Index>(base.cols());
  const auto p = static_cast<Eigen::Index>(beta.size());
  const Eigen::VectorXd eta0 = kernels::omp::linear_predictor(base, beta.head(p_base));
  const double shift = latent_shift(effect, beta, p_base);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  std::vector<int> cols;
  std::vector<double> x1, x0;
  for (std::size_t r = 0; r < base.rows(); ++r) {
    const double w = base.weight[r];
    if (w == 0) continue;
    const double y = base.y[r];
    const double e0 = eta0(static_cast<Eigen::Index>(r));
    const double mu0 = kernels::inv_logit(e0);
    const double mu1 = kernels::inv_logit(e0 + shift);
    const double q = posterior(pi[r], y, e0, e0 + shift).q;
    cols.assign(base.row_columns(r).begin(), base.row_columns(r).end());
    x1.assign(base.row_values(r).begin(), base.row_values(r).end());
    x0 = x1;
    if (effect.free) {
      cols.push_back(static_cast<int>(p_base));
      x1.push_back(1.0);
      x0.push_back(0.0);
    }
    const double c1 = w * q * mu1 * (1.0 - mu1);
    const double c0 = w * (1.0 - q) * mu0 * (1.0 - mu0);
    const double cv = w * q * (1.0 - q);
    for (std::size_t a = 0; a < cols.size(); ++a) {
      const double da = x1[a] * (y - mu1) - x0[a] * (y - mu0);
      for (std::size_t b = 0; b < cols.size(); ++b) {
        const double db = x1[b] * (y - mu1) - x0[b] * (y - mu0);
        info(cols[a], cols[b]) += c1 * x1[a] * x1[b] + c0 * x0[a] * x0[b] - cv * da * db;
      }
    }
  }
  return info;
}

void validate_pi(std::span<const double> pi, std::size_t rows) {
  if (pi.size() != rows) throw ValidationError("mixing probabilities must match design rows");
  for (double v : pi) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("mixing probability outside [0,1]");
  }
}

}  // namespace

double design_effect_adjust(double robust_var, double naive_var, double target_var) {
  if (!(naive_var > 0)) throw ValidationError("design effect needs a positive naive variance");
  if (!(robust_var >= 0)) throw ValidationError("design effect needs a non-negative robust variance");
  return target_var * (robust_var / naive_var);
}

double mixture_log_likelihood(const glm::DesignMatrix& base, std::span<const double> pi,
                              const LatentEffect& effect, const Eigen::VectorXd& coefficients) {
  validate_pi(pi, base.rows());
  std::vector<double> q;
  return e_step(base, pi, effect, coefficients, q);
}

MixtureFit fit_latent_mixture(const glm::DesignMatrix& base, std::span<const double> pi,
                              const LatentEffect& effect, const Eigen::VectorXd& start,
                              const MixtureOptions& options) {
  validate_pi(pi, base.rows());
  Expanded ex = expand(base, pi, effect);
  if (start.size() != static_cast<Eigen::Index>(ex.design.cols())) {
    throw ValidationError("mixture start vector has wrong length");
  }

  MixtureFit out;
  out.names = ex.design.names;
  Eigen::VectorXd beta = start;
  std::vector<double> q;
  double ll = e_step(base, pi, effect, beta, q);
  out.log_likelihood_trace.push_back(ll);

  glm::FitOptions fit_opts;
  bool first = true;
  for (int it = 1; it <= options.max_iterations; ++it) {
    for (std::size_t k = 0; k < ex.design.rows(); ++k) {
      const std::size_t r = ex.base_row[k];
      ex.design.weight[k] = base.weight[r] * (ex.w_value[k] ? q[r] : 1.0 - q[r]);
    }
    fit_opts.start = beta;
    fit_opts.check_identifiability = first;
    first = false;
    beta = glm::fit_logistic(ex.design, fit_opts).coefficients;
    const double next = e_step(base, pi, effect, beta, q);
    out.log_likelihood_trace.push_back(next);
    out.iterations = it;
    const double change = next - ll;
    ll = next;
    if (std::abs(change) < options.log_likelihood_tolerance) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) {
    warn("EM stopped after " + std::to_string(out.iterations) + " iterations without converging");
  }
  out.coefficients = beta;
  const Eigen::MatrixXd info = observed_information(base, pi, effect, beta);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  out.covariance = ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

LatentExposureInputs prepare_latent_exposure(std::span<const BirthRecord> births,
                                             const did::DoseAssignment& dose,
                                             const StudyConfig& cfg, const SgaTable* sga_table) {
  return prepare_latent_exposure(did::fit_primary_dose_model(births, dose, cfg, sga_table),
                                 did::fit_secondary_binary_model(births, dose, cfg, sga_table), births,
                                 dose, cfg, sga_table);
}

LatentExposureInputs prepare_latent_exposure(const did::DidFit& primary, const did::DidFit& binary,
                                             std::span<const BirthRecord> births,
                                             const did::DoseAssignment& dose,
                                             const StudyConfig& cfg, const SgaTable* sga_table) {
  LatentExposureInputs in;
  in.data = did::build_design(births, dose, cfg, {did::TreatmentTerm::none, false, false}, sga_table);
  in.start = binary.fit.coefficients;
  in.binary_estimate = binary.effect.estimate;
  const auto j = static_cast<Eigen::Index>(primary.data.treatment_column);
  in.design_effect =
      design_effect_adjust(primary.fit.robust_covariance(j, j), primary.fit.naive_covariance(j, j), 1.0);
  in.alpha = cfg.alpha;
  in.n_clusters = primary.fit.n_clusters;
  return in;
}

LatentExposureFit em_latent_exposure(const LatentExposureInputs& in, double theta,
                                     const MixtureOptions& options) {
  if (!(theta > 0)) throw ValidationError("invalid theta: must be positive");
  const auto& data = in.data;
  double max_dose = 0;
  for (std::size_t r = 0; r < data.design.rows(); ++r) {
    if (data.treated_post[r]) max_dose = std::max(max_dose, data.dose[r]);
  }
  if (max_dose <= 0) {
    throw NonIdentifiableError("non-identifiable: every dose is zero, tau cannot be estimated");
  }
  if (theta * max_dose > 1.0 + kThetaSlack) {
    throw ValidationError("invalid theta " + std::to_string(theta) + ": theta * max dose = " +
                          std::to_string(theta * max_dose) + " exceeds 1");
  }
  std::vector<double> pi(data.design.rows(), 0.0);
  for (std::size_t r = 0; r < pi.size(); ++r) {
    if (data.treated_post[r]) pi[r] = std::clamp(theta * data.dose[r], 0.0, 1.0);
  }
  const MixtureFit m = fit_latent_mixture(data.design, pi, LatentEffect{true, "tau", 0.0}, in.start, options);
  const auto j = m.coefficients.size() - 1;
  LatentExposureFit out;
  out.theta = theta;
  out.tau = m.coefficients(j);
  out.tau_naive_se = std::sqrt(m.covariance(j, j));
  out.design_effect = in.design_effect;
  out.tau_se = std::sqrt(design_effect_adjust(in.design_effect, 1.0, m.covariance(j, j)));
  const double crit = glm::t_quantile(1.0 - in.alpha / 2.0, std::max(1, in.n_clusters - 1));
  out.ci_low = out.tau - crit * out.tau_se;
  out.ci_high = out.tau + crit * out.tau_se;
  out.odds_ratio = std::exp(out.tau);
  out.em_iterations = m.iterations;
  out.converged = m.converged;
  out.log_likelihood = m.log_likelihood_trace.back();
  out.log_likelihood_trace = m.log_likelihood_trace;
  return out;
}

LatentExposureFit em_latent_exposure(std::span<const BirthRecord> births,
                                     const did::DoseAssignment& dose, double theta,
                                     const StudyConfig& cfg, const SgaTable* sga_table) {
  return em_latent_exposure(prepare_latent_exposure(births, dose, cfg, sga_table), theta);
}

std::vector<LatentExposureFit> theta_grid_report(const LatentExposureInputs& inputs,
                                                 std::span<const double> theta_grid,
                                                 const MixtureOptions& options) {
  std::set<double> distinct(theta_grid.begin(), theta_grid.end());
  if (distinct.size() != theta_grid.size()) warn("duplicate theta values dropped from grid");
  const std::vector<double> thetas(distinct.begin(), distinct.end());

  double max_dose = 0;
  for (std::size_t r = 0; r < inputs.data.design.rows(); ++r) {
    if (inputs.data.treated_post[r]) max_dose = std::max(max_dose, inputs.data.dose[r]);
  }
  for (double theta : thetas) {
    if (!(theta > 0) || theta * max_dose > 1.0 + kThetaSlack) {
      throw ValidationError("invalid theta " + std::to_string(theta) + " in grid: theta * max dose = " +
                            std::to_string(theta * max_dose));
    }
  }

  std::vector<LatentExposureFit> out(thetas.size());
  std::vector<std::exception_ptr> errors(thetas.size());
  const auto n = static_cast<std::ptrdiff_t>(thetas.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = em_latent_exposure(inputs, thetas[static_cast<std::size_t>(i)], options);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ConfounderResult adjust_for_confounder(const did::DidFit& primary, const ConfounderSpec& spec,
                                       double alpha, const MixtureOptions& options) {
  if (!(spec.outcome_or >= 1.0)) throw ValidationError("confounder odds ratio must be >= 1");
  if (!(spec.prevalence >= 0.0 && spec.prevalence <= 1.0)) {
    throw ValidationError("confounder prevalence outside [0,1]");
  }
  const auto& data = primary.data;
  ConfounderResult out;
  out.spec = spec;
  // With Gamma = 1 or p = 0 both mixture components coincide: the model is the
  // primary model itself, and refitting would only polish its optimum.
  if (spec.outcome_or == 1.0 || spec.prevalence == 0.0) {
    out.estimate = primary.effect.estimate;
    out.se = primary.effect.robust_se;
    out.statistic = primary.effect.statistic;
    out.p_value = primary.effect.p_value;
    out.significant = out.p_value < alpha;
    return out;
  }
  std::vector<double> pi(data.design.rows(), 0.0);
  for (std::size_t r = 0; r < pi.size(); ++r) {
    if (data.treated_post[r]) pi[r] = spec.prevalence;
  }
  const MixtureFit m = fit_latent_mixture(data.design, pi,
                                          LatentEffect{false, "u", std::log(spec.outcome_or)},
                                          primary.fit.coefficients, options);
  const auto j = static_cast<Eigen::Index>(data.treatment_column);
  const double de = design_effect_adjust(primary.fit.robust_covariance(j, j),
                                         primary.fit.naive_covariance(j, j), 1.0);
  out.estimate = m.coefficients(j);
  out.se = std::sqrt(design_effect_adjust(de, 1.0, m.covariance(j, j)));
  out.statistic = out.estimate / out.se;
  out.p_value = glm::t_two_sided_p(out.statistic, primary.fit.n_clusters - 1);
  // An adjusted estimate that flips sign no longer supports the original effect.
  out.significant = out.p_value < alpha && (out.estimate > 0) == (primary.effect.estimate > 0);
  out.em_iterations = m.iterations;
  return out;
}

std::vector<ConfounderSpec> confounder_grid(std::span<const double> prevalences,
                                            std::span<const double> odds_ratios) {
  std::vector<ConfounderSpec> out;
  for (double p : prevalences) {
    for (double g : odds_ratios) out.push_back({p, g});
  }
  return out;
}

SweepReport confounder_sweep(const did::DidFit& primary, std::span<const ConfounderSpec> grid,
                             double alpha, const MixtureOptions& options) {
  for (const auto& s : grid) {
    if (!(s.outcome_or >= 1.0)) throw ValidationError("confounder odds ratio must be >= 1");
  }
  SweepReport report;
  report.original_estimate = primary.effect.estimate;
  if (!(primary.effect.p_value < alpha)) {
    report.skipped = true;
    report.skip_reason = "primary not significant";
    return report;
  }
  report.results.resize(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      report.results[static_cast<std::size_t>(i)] =
          adjust_for_confounder(primary, grid[static_cast<std::size_t>(i)], alpha, options);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::set<double> prevalences;
  for (const auto& s : grid) prevalences.insert(s.prevalence);
  for (double p : prevalences) {
    FrontierPoint fp{p, std::nullopt};
    for (const auto& r : report.results) {
      if (r.spec.prevalence != p || r.significant) continue;
      if (!fp.odds_ratio || r.spec.outcome_or < *fp.odds_ratio) fp.odds_ratio = r.spec.outcome_or;
    }
    report.frontier.push_back(fp);
  }
  return report;
}

}  // namespace mdid::sensitivity

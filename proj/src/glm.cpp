#include "mdid/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mdid/errors.hpp"
#include "mdid/kernels.hpp"

namespace mdid::glm {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kProbFloor = 1e-10;

void check_identifiable(const DesignMatrix& d) {
  const Eigen::MatrixXd g = kernels::omp::gram(d);
  const auto p = g.rows();
  std::string empty;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(g(i, i) > 0)) empty += (empty.empty() ? "" : ", ") + d.names[static_cast<std::size_t>(i)];
  }
  if (!empty.empty()) {
    throw NonIdentifiableError("non-identifiable: columns with no observations: " + empty);
  }
  const Eigen::VectorXd scale = g.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = scale.asDiagonal() * g * scale.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(corr);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) {
      cols += (cols.empty() ? "" : ", ") + d.names[static_cast<std::size_t>(perm(k))];
    }
    throw NonIdentifiableError("non-identifiable: design is rank deficient (" +
                               std::to_string(qr.rank()) + " of " + std::to_string(p) +
                               " columns); dependent columns include " + cols);
  }
}

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                          std::vector<std::string>& warnings) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const std::string msg = "singular weighted normal equations; adding ridge 1e-10";
  warnings.push_back(msg);
  warn(msg);
  Eigen::MatrixXd ridged = a;
  ridged.diagonal().array() += kRidge;
  return ridged.ldlt().solve(b);
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& a, std::vector<std::string>& warnings) {
  const auto p = a.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  Eigen::MatrixXd inv;
  if (llt.info() == Eigen::Success) {
    inv = llt.solve(identity);
  } else {
    const std::string msg = "singular information matrix at optimum; adding ridge 1e-10";
    warnings.push_back(msg);
    warn(msg);
    Eigen::MatrixXd ridged = a;
    ridged.diagonal().array() += kRidge;
    inv = ridged.ldlt().solve(identity);
  }
  return 0.5 * (inv + inv.transpose());
}

int count_clusters(const DesignMatrix& d) {
  std::vector<char> seen(d.cluster_names.size(), 0);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    if (d.weight[r] > 0) seen[static_cast<std::size_t>(d.cluster[r])] = 1;
  }
  return static_cast<int>(std::count(seen.begin(), seen.end(), 1));
}

}  // namespace

FitResult fit_logistic(const DesignMatrix& d, const FitOptions& opt) {
  const auto p = static_cast<Eigen::Index>(d.cols());
  if (d.rows() == 0 || p == 0) throw ValidationError("empty design");
  double total = 0;
  double events = 0;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    if (d.y[r] != 0.0 && d.y[r] != 1.0) throw ValidationError("outcomes must be 0 or 1");
    total += d.weight[r];
    events += d.weight[r] * d.y[r];
  }
  if (!(total > static_cast<double>(p))) {
    throw ValidationError("need more observations (" + std::to_string(total) + ") than columns (" +
                          std::to_string(p) + ")");
  }
  if (events <= 0 || events >= total) {
    throw SeparationError("separation: outcome has no variation, maximum likelihood estimate does not exist");
  }
  if (opt.check_identifiability) check_identifiable(d);

  FitResult res;
  res.names = d.names;
  res.blocks = d.blocks;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (opt.start) {
    if (opt.start->size() != p) throw ValidationError("start vector has wrong length");
    beta = *opt.start;
  } else {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (d.blocks[static_cast<std::size_t>(j)] == ColumnBlock::intercept) {
        const double ybar = events / total;
        beta(j) = std::log(ybar / (1.0 - ybar));
        break;
      }
    }
  }

  kernels::NormalEquations ne = kernels::omp::accumulate(d, beta);
  double max_beta = beta.cwiseAbs().maxCoeff();
  int iterations = 0;
  bool converged = false;
  while (true) {
    if (ne.score.cwiseAbs().maxCoeff() < opt.score_tolerance) {
      converged = true;
      break;
    }
    if (iterations >= opt.max_iterations) {
      throw ConvergenceError("logistic regression did not converge in " +
                                 std::to_string(opt.max_iterations) + " iterations (max |score| " +
                                 std::to_string(ne.score.cwiseAbs().maxCoeff()) + ")",
                             iterations);
    }
    const Eigen::VectorXd delta = solve_spd(ne.information, ne.score, res.warnings);
    double step = 1.0;
    Eigen::VectorXd candidate;
    kernels::NormalEquations next;
    for (int halving = 0; halving < 30; ++halving) {
      candidate = beta + step * delta;
      next = kernels::omp::accumulate(d, candidate);
      if (std::isfinite(next.log_likelihood) &&
          next.log_likelihood >= ne.log_likelihood - 1e-12 * std::abs(ne.log_likelihood)) {
        break;
      }
      step *= 0.5;
    }
    ++iterations;
    const double new_max_beta = candidate.cwiseAbs().maxCoeff();
    if ((next.min_prob < kProbFloor || next.max_prob > 1.0 - kProbFloor) && new_max_beta > max_beta) {
      throw SeparationError("separation: fitted probabilities reached 0 or 1 with growing coefficients");
    }
    const double dev_old = -2.0 * ne.log_likelihood;
    const double dev_new = -2.0 * next.log_likelihood;
    beta = candidate;
    max_beta = new_max_beta;
    ne = std::move(next);
    if (std::abs(dev_new - dev_old) / (std::abs(dev_new) + 0.1) < opt.relative_deviance_tolerance) {
      converged = true;
      break;
    }
  }

  res.coefficients = beta;
  res.naive_covariance = invert_spd(ne.information, res.warnings);
  res.n_obs = total;
  res.n_clusters = count_clusters(d);
  res.converged = converged;
  res.iterations = iterations;
  res.log_likelihood = ne.log_likelihood;
  res.max_abs_score = ne.score.cwiseAbs().maxCoeff();
  return res;
}

Eigen::MatrixXd cluster_robust_covariance(const FitResult& fit, const DesignMatrix& d) {
  if (!fit.converged) throw ValidationError("cluster-robust covariance requires a converged fit");
  const int g = count_clusters(d);
  if (g < 2) {
    throw DegenerateError("cluster-robust covariance needs at least 2 clusters (got " +
                          std::to_string(g) + ")");
  }
  const Eigen::MatrixXd s = kernels::omp::cluster_scores(d, fit.coefficients);
  const Eigen::MatrixXd meat = s.transpose() * s;
  const Eigen::MatrixXd& bread = fit.naive_covariance;
  Eigen::MatrixXd v = bread * meat * bread * (static_cast<double>(g) / (g - 1));
  return 0.5 * (v + v.transpose());
}

Eigen::VectorXd linear_predictor(const DesignMatrix& design, const Eigen::VectorXd& beta) {
  return kernels::omp::linear_predictor(design, beta);
}

Eigen::VectorXd fitted_probabilities(const DesignMatrix& design, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = linear_predictor(design, beta);
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = kernels::inv_logit(eta(i));
  return eta;
}

double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  boost::math::normal_distribution<> n;
  return 2.0 * boost::math::cdf(boost::math::complement(n, std::abs(z)));
}

double t_two_sided_p(double statistic, double df) {
  if (!std::isfinite(df)) return normal_two_sided_p(statistic);
  if (!std::isfinite(statistic)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(statistic)));
}

double t_quantile(double prob, double df) {
  if (!std::isfinite(df)) {
    boost::math::normal_distribution<> n;
    return boost::math::quantile(n, prob);
  }
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, prob);
}

WaldSummary summarize(const FitResult& fit, std::string_view name, double alpha) {
  WaldSummary w;
  w.name = std::string(name);
  w.estimate = fit.coefficient(name);
  w.naive_se = fit.naive_se(name);
  const bool robust = fit.robust_covariance.size() > 0;
  w.robust_se = robust ? fit.robust_se(name) : std::numeric_limits<double>::quiet_NaN();
  const double se = robust ? w.robust_se : w.naive_se;
  w.df = robust ? fit.n_clusters - 1 : std::numeric_limits<double>::infinity();
  w.statistic = w.estimate / se;
  w.p_value = t_two_sided_p(w.statistic, w.df);
  const double crit = t_quantile(1.0 - alpha / 2.0, w.df);
  w.ci_low = w.estimate - crit * se;
  w.ci_high = w.estimate + crit * se;
  w.odds_ratio = std::exp(w.estimate);
  w.or_ci_low = std::exp(w.ci_low);
  w.or_ci_high = std::exp(w.ci_high);
  return w;
}

std::vector<WaldSummary> coefficient_table(const FitResult& fit, double alpha) {
  std::vector<WaldSummary> out;
  out.reserve(fit.names.size());
  for (const auto& name : fit.names) out.push_back(summarize(fit, name, alpha));
  return out;
}

PairedTTest paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("paired t-test needs equal-length samples");
  const std::size_t n = x.size();
  if (n < 2) throw ValidationError("paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
  if (std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); })) {
    throw DegenerateError("paired t-test: differences have zero variance");
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double se = sd / std::sqrt(static_cast<double>(n));
  PairedTTest out;
  out.mean_diff = mean;
  out.df = static_cast<double>(n - 1);
  out.t = mean / se;
  out.p_value = t_two_sided_p(out.t, out.df);
  const double crit = t_quantile(0.975, out.df);
  out.ci_low = mean - crit * se;
  out.ci_high = mean + crit * se;
  return out;
}

}  // namespace mdid::glm

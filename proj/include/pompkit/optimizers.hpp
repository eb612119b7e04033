#pragma once

/// @file optimizers.hpp Iterated filtering and smoothing for maximum
/// likelihood: IF1, IF2, IS2, momentum IF, accelerated IF and averaged IF.
///
/// Every update is an ascent step on the log-likelihood. Parameters move on
/// the estimation scale; traces report the natural scale.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"
#include "pompkit/particle_pass.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/rng.hpp"
#include "pompkit/score.hpp"

namespace pompkit {

struct OptimizerTrace {
  std::vector<std::string> param_names;
  ParamVector start;
  /// Row m-1 holds theta_m on the natural scale.
  RowMatrix theta;
  /// Log-likelihood estimate of the perturbed pass at each iteration.
  std::vector<double> loglik;
  /// Score estimates on the estimation scale (IS2, AIF).
  RowMatrix score;
  /// Observed information estimates (IS2).
  std::vector<Eigen::MatrixXd> information;
  std::vector<long> n_failures;
  std::vector<double> step_norm;
  /// 0: regular step; 1: gradient fallback; 2: step length capped.
  std::vector<int> fallback;
  /// Across-iteration average of theta_m for m >= average_from (AVIF).
  ParamVector averaged;

  [[nodiscard]] std::size_t iterations() const noexcept { return static_cast<std::size_t>(theta.rows()); }
  [[nodiscard]] ParamVector estimate() const {
    return theta.rows() == 0 ? start : ParamVector(theta.row(theta.rows() - 1).transpose());
  }
};

struct IteratedConfig {
  std::size_t iterations = 1;
  std::size_t particles = 100;
  PerturbationSpec pert;
  FilterOptions filter;
  /// Perturb on the natural scale even when the model defines transforms.
  bool natural_scale = false;
};

/// Step-size sequences for accelerated iterated filtering, indexed m = 1..M.
struct AccelSequences {
  std::vector<double> alpha, lambda, beta, gamma;

  /// alpha_m = 2/(m+1), lambda_m = lambda0/m, beta_m = lambda_m/2.
  static AccelSequences defaults(std::size_t M, double lambda0 = 1.0) {
    AccelSequences s;
    for (std::size_t m = 1; m <= M; ++m) {
      const auto md = static_cast<double>(m);
      s.alpha.push_back(2.0 / (md + 1.0));
      s.lambda.push_back(lambda0 / md);
      s.beta.push_back(lambda0 / md / 2.0);
      s.gamma.push_back(0.0);
    }
    return s;
  }
};

namespace detail {

class IterationDriver {
 public:
  IterationDriver(const ModelSpec& model, const TimeSeriesData& data, const IteratedConfig& cfg,
                  const ParamVector& theta0)
      : model_(model), data_(data), cfg_(cfg) {
    validate(model, data);
    validate_params(model, theta0);
    validate(cfg.pert, model.num_params());
    if (cfg.iterations < 1) throw ValidationError("number of iterations must be >= 1");
    if (cfg.particles < 1) throw ValidationError("number of particles must be >= 1");
    p_ = model.num_params();
    transforms_ = !cfg.natural_scale && model.has_transforms();
    walk_ = cfg.pert.walk_coordinates();
    for (std::size_t i = 0; i < p_; ++i)
      if (cfg.pert.is_ivp(i) && cfg.pert.sd_of(i) > 0.0) ivp_.push_back(i);
    natural_ = theta0;
    est_ = to_est(theta0);
    trace_.param_names = model.param_names();
    trace_.start = theta0;
    trace_.theta.resize(static_cast<Eigen::Index>(cfg.iterations), static_cast<Eigen::Index>(p_));
  }

  [[nodiscard]] ParamVector to_est(const ParamVector& natural) const {
    return transforms_ ? model_.to_estimation(natural) : natural;
  }

  PassConfig base_config(std::size_t m, ParamKernel kernel) const {
    const auto scales = cooling(cfg_.pert.cooling, cfg_.pert.initial_multiplier, m);
    PassConfig pc;
    pc.particles = cfg_.particles;
    pc.filter = cfg_.filter;
    pc.kernel = kernel;
    pc.pert = &cfg_.pert;
    pc.swarm_scale = scales.swarm_scale;
    pc.walk_scale = scales.walk_scale;
    pc.use_transforms = !cfg_.natural_scale;
    pc.ivp_lag = cfg_.pert.lag;
    pc.filter_param_stats = true;
    return pc;
  }

  PassOutput run(const PassConfig& pc, std::size_t m, const RngStream& rng) const {
    return run_pass(model_, data_, pc, rng.substream("iter", m));
  }

  /// Sets the estimation-scale value of coordinate i, keeping the natural
  /// value bit-exact for coordinates that do not move.
  void set(std::size_t i, double value) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (value == est_[ii]) return;
    est_[ii] = value;
    natural_[ii] = transforms_ ? to_natural_scale(model_.params[i].transform, value) : value;
  }

  void record(std::size_t m, const PassOutput& out, double step_norm, int fallback) {
    trace_.theta.row(static_cast<Eigen::Index>(m - 1)) = natural_.transpose();
    trace_.loglik.push_back(out.loglik);
    trace_.n_failures.push_back(out.n_failures);
    trace_.step_norm.push_back(step_norm);
    trace_.fallback.push_back(fallback);
  }

  void update_ivps(const PassOutput& out) {
    for (auto i : ivp_) set(i, out.ivp_swarm_mean[static_cast<Eigen::Index>(i)]);
  }

  // Squared-length of the move over walk coordinates, then sqrt.
  [[nodiscard]] double step_norm(const ParamVector& before) const {
    double s = 0.0;
    for (auto i : walk_) {
      const double d = est_[static_cast<Eigen::Index>(i)] - before[static_cast<Eigen::Index>(i)];
      s += d * d;
    }
    return std::sqrt(s);
  }

  const ModelSpec& model_;
  const TimeSeriesData& data_;
  const IteratedConfig& cfg_;
  std::size_t p_ = 0;
  bool transforms_ = false;
  std::vector<std::size_t> walk_, ivp_;
  ParamVector natural_, est_;
  OptimizerTrace trace_;
};

// sum_n V_n^-1 (theta_bar_n - theta_bar_{n-1}) per coordinate, theta_bar_0 = center.
inline double weighted_increment(const PassOutput& out, const ParamVector& center, std::size_t i) {
  const auto ii = static_cast<Eigen::Index>(i);
  double acc = 0.0;
  double prev = center[ii];
  for (Eigen::Index n = 0; n < out.filter_means.rows(); ++n) {
    const double cur = out.filter_means(n, ii);
    acc += (cur - prev) / out.pred_variances(n, ii);
    prev = cur;
  }
  return acc;
}

}  // namespace detail

/// Classical iterated filtering:
/// theta_m = theta_{m-1} + V_1 sum_n V_n^-1 (theta_bar_n - theta_bar_{n-1}).
inline OptimizerTrace if1(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                          const IteratedConfig& cfg, const RngStream& rng) {
  detail::IterationDriver d(model, data, cfg, theta0);
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    auto pc = d.base_config(m, detail::ParamKernel::random_walk);
    pc.center = d.est_;
    const auto out = d.run(pc, m, rng);
    const ParamVector before = d.est_;
    for (auto i : d.walk_) {
      const auto ii = static_cast<Eigen::Index>(i);
      d.set(i, before[ii] + out.pred_variances(0, ii) * detail::weighted_increment(out, before, i));
    }
    d.update_ivps(out);
    d.record(m, out, d.step_norm(before), 0);
  }
  return std::move(d.trace_);
}

/// Momentum iterated filtering: mu_m = gamma mu_{m-1} + (IF1 increment),
/// theta_m = theta_{m-1} + mu_m. gamma = 0 reproduces if1.
inline OptimizerTrace momentum_mif(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                                   const IteratedConfig& cfg, double gamma, const RngStream& rng) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("momentum gamma must lie in [0, 1)");
  detail::IterationDriver d(model, data, cfg, theta0);
  ParamVector mu = ParamVector::Zero(static_cast<Eigen::Index>(d.p_));
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    auto pc = d.base_config(m, detail::ParamKernel::random_walk);
    pc.center = d.est_;
    const auto out = d.run(pc, m, rng);
    const ParamVector before = d.est_;
    for (auto i : d.walk_) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double delta = out.pred_variances(0, ii) * detail::weighted_increment(out, before, i);
      mu[ii] = gamma == 0.0 ? delta : gamma * mu[ii] + delta;
      d.set(i, before[ii] + mu[ii]);
    }
    d.update_ivps(out);
    d.record(m, out, d.step_norm(before), 0);
  }
  return std::move(d.trace_);
}

/// Iterated filtering with the parameter swarm carried across iterations.
/// theta_m is the mean of the final swarm.
inline OptimizerTrace if2(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                          const IteratedConfig& cfg, const RngStream& rng) {
  detail::IterationDriver d(model, data, cfg, theta0);
  RowMatrix swarm;
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    auto pc = d.base_config(m, detail::ParamKernel::random_walk);
    pc.center = d.est_;
    if (m > 1) pc.initial_swarm = &swarm;
    auto out = d.run(pc, m, rng);
    const ParamVector before = d.est_;
    const ParamVector mean = out.final_swarm.colwise().mean().transpose();
    for (auto i : d.walk_) d.set(i, mean[static_cast<Eigen::Index>(i)]);
    d.update_ivps(out);
    swarm = std::move(out.final_swarm);
    d.record(m, out, d.step_norm(before), 0);
  }
  return std::move(d.trace_);
}

struct NewtonStep {
  Eigen::VectorXd step;
  int fallback = 0;
};

/// Newton step info^-1 score with a positive-definiteness guard.
///
/// The matrix is symmetrized and shifted by rho = max(0, eps - lambda_min),
/// eps = 1e-6 trace/p. A non-positive trace or a condition number above 1e12
/// falls back to a gradient step of size 1/max|diag|, or to
/// `fallback_scale .* score` when the diagonal vanishes.
inline NewtonStep guarded_newton_step(const Eigen::MatrixXd& info, const Eigen::VectorXd& score,
                                      const Eigen::VectorXd& fallback_scale) {
  const Eigen::MatrixXd sym = 0.5 * (info + info.transpose());
  const auto k = sym.rows();
  NewtonStep out;
  auto gradient = [&] {
    const double dmax = sym.diagonal().cwiseAbs().maxCoeff();
    out.fallback = 1;
    if (dmax > 0.0 && std::isfinite(dmax))
      out.step = score / dmax;
    else
      out.step = fallback_scale.cwiseProduct(score);
    return out;
  };
  if (k == 0) return {Eigen::VectorXd(), 0};
  const double trace = sym.trace();
  if (!(trace > 0.0) || !sym.allFinite()) return gradient();
  const double eps = 1e-6 * trace / static_cast<double>(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double lmin = es.eigenvalues().minCoeff();
  const double rho = std::max(0.0, eps - lmin);
  const Eigen::VectorXd ev = es.eigenvalues().array() + rho;
  if (ev.maxCoeff() / ev.minCoeff() > 1e12) return gradient();
  out.step = es.eigenvectors() * (es.eigenvectors().transpose() * score).cwiseQuotient(ev);
  return out;
}

struct Is2Options {
  /// Largest move per iteration in units of the current perturbation sd.
  double max_step_sd = 5.0;
};

/// Second-order iterated smoothing.
///
/// With Pi_n the per-time prediction variance and mu_n the prior mean of the
/// time-n parameter (theta_{m-1} at n = 1, the filter mean at n-1 after),
///   S = sum_n Pi_n^-1 (theta^L_n - mu_n)
///   I = sum_n Pi_n^-1 (Pi_n - V_{n,n}) Pi_n^-1
/// and theta_m = theta_{m-1} + I^-1 S after the guard above.
inline OptimizerTrace is2(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                          const IteratedConfig& cfg, const RngStream& rng, const Is2Options& opts = {}) {
  if (cfg.pert.lag < 1) throw ValidationError("is2 requires a smoothing lag L >= 1");
  detail::IterationDriver d(model, data, cfg, theta0);
  const auto& walk = d.walk_;
  const auto k = static_cast<Eigen::Index>(walk.size());
  const auto p = static_cast<Eigen::Index>(d.p_);
  d.trace_.score = RowMatrix::Zero(static_cast<Eigen::Index>(cfg.iterations), p);
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    auto pc = d.base_config(m, detail::ParamKernel::random_walk);
    pc.center = d.est_;
    pc.lag = cfg.pert.lag;
    pc.smooth_params = true;
    pc.param_covariance = true;
    const auto out = d.run(pc, m, rng);
    const ParamVector before = d.est_;
    Eigen::VectorXd S = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd I = Eigen::MatrixXd::Zero(k, k);
    const auto N = out.filter_means.rows();
    for (Eigen::Index n = 1; n <= N; ++n) {
      Eigen::VectorXd inv_pi(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        const auto ia = static_cast<Eigen::Index>(walk[static_cast<std::size_t>(a)]);
        inv_pi[a] = 1.0 / out.pred_variances(n - 1, ia);
        const double prior_mean = n == 1 ? before[ia] : out.filter_means(n - 2, ia);
        S[a] += inv_pi[a] * (out.smooth_param_means(n, ia) - prior_mean);
      }
      const auto& V = out.smooth_param_covs[static_cast<std::size_t>(n)];
      for (Eigen::Index a = 0; a < k; ++a) {
        const auto ia = static_cast<Eigen::Index>(walk[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < k; ++b) {
          const auto ib = static_cast<Eigen::Index>(walk[static_cast<std::size_t>(b)]);
          const double pi_ab = a == b ? 1.0 / inv_pi[a] : 0.0;
          I(a, b) += inv_pi[a] * (pi_ab - V(ia, ib)) * inv_pi[b];
        }
      }
    }
    int fallback = 0;
    if (k > 0) {
      Eigen::VectorXd v1(k), sd(k);
      const double walk_scale = cooling(cfg.pert.cooling, cfg.pert.initial_multiplier, m).walk_scale;
      for (Eigen::Index a = 0; a < k; ++a) {
        const auto i = walk[static_cast<std::size_t>(a)];
        v1[a] = out.pred_variances(0, static_cast<Eigen::Index>(i));
        sd[a] = walk_scale * cfg.pert.sd_of(i);
      }
      auto ns = guarded_newton_step(I, S, v1);
      fallback = ns.fallback;
      const double ratio = ns.step.cwiseQuotient(sd).cwiseAbs().maxCoeff();
      if (ratio > opts.max_step_sd) {
        ns.step *= opts.max_step_sd / ratio;
        fallback = fallback == 0 ? 2 : fallback;
      }
      for (Eigen::Index a = 0; a < k; ++a) {
        const auto i = walk[static_cast<std::size_t>(a)];
        d.set(i, before[static_cast<Eigen::Index>(i)] + ns.step[a]);
        d.trace_.score(static_cast<Eigen::Index>(m - 1), static_cast<Eigen::Index>(i)) = S[a];
      }
    }
    d.trace_.information.push_back(I);
    d.update_ivps(out);
    d.record(m, out, d.step_norm(before), fallback);
  }
  return std::move(d.trace_);
}

/// Accelerated iterated filtering. Each time step draws fresh parameters
/// around the midpoint theta^md_m; the score
///   S_m = c^{-2(m-1)} Psi^-1 sum_n (theta_bar_n - theta^md_m) / (N + 1)
/// drives theta_m = theta_{m-1} + lambda_m S_m and
/// theta^ag_m = theta^md_m + beta_m S_m. With pert.lag > 0 the lag-smoothed
/// means replace the filter means.
inline OptimizerTrace aif(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                          const IteratedConfig& cfg, const AccelSequences& seqs, const RngStream& rng) {
  if (seqs.alpha.size() < cfg.iterations || seqs.lambda.size() < cfg.iterations ||
      seqs.beta.size() < cfg.iterations)
    throw ValidationError("acceleration sequences are shorter than the number of iterations");
  detail::IterationDriver d(model, data, cfg, theta0);
  const auto p = static_cast<Eigen::Index>(d.p_);
  const Eigen::MatrixXd psi = score_psi(cfg.pert, d.p_);
  d.trace_.score = RowMatrix::Zero(static_cast<Eigen::Index>(cfg.iterations), p);
  ParamVector ag = d.est_;
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    const double alpha = seqs.alpha[m - 1];
    const ParamVector before = d.est_;
    ParamVector md = before;
    for (auto i : d.walk_) {
      const auto ii = static_cast<Eigen::Index>(i);
      md[ii] = alpha == 1.0 ? before[ii] : (1.0 - alpha) * ag[ii] + alpha * before[ii];
    }
    auto pc = d.base_config(m, detail::ParamKernel::white_noise);
    pc.center = md;
    if (cfg.pert.lag > 0) {
      pc.lag = cfg.pert.lag;
      pc.smooth_params = true;
    }
    const auto out = d.run(pc, m, rng);
    ParamVector S = ParamVector::Zero(p);
    const double noise_scale = pc.walk_scale * cfg.pert.walk_multiplier;
    if (!d.walk_.empty() && noise_scale > 0.0) {
      RowMatrix means(out.filter_means.rows() + 1, p);
      means.row(0) = md.transpose();
      means.bottomRows(out.filter_means.rows()) =
          cfg.pert.lag > 0 ? RowMatrix(out.smooth_param_means.bottomRows(out.filter_means.rows()))
                           : out.filter_means;
      S = score_estimate(means, md, psi, noise_scale, ScoreMode::theorem2);
    }
    for (auto i : d.walk_) {
      const auto ii = static_cast<Eigen::Index>(i);
      d.set(i, before[ii] + seqs.lambda[m - 1] * S[ii]);
      ag[ii] = md[ii] + seqs.beta[m - 1] * S[ii];
    }
    d.update_ivps(out);
    for (auto i : d.ivp_) ag[static_cast<Eigen::Index>(i)] = d.est_[static_cast<Eigen::Index>(i)];
    d.trace_.score.row(static_cast<Eigen::Index>(m - 1)) = S.transpose();
    d.record(m, out, d.step_norm(before), 0);
  }
  return std::move(d.trace_);
}

struct AvifOptions {
  /// Filter means with n > k_start enter the average.
  std::size_t k_start = 0;
  /// Use the telescoped update (theta_bar_N - theta_bar_k) / (N - k) as printed.
  bool literal_update = false;
  /// First iteration (1-based) included in the across-iteration average.
  std::size_t average_from = 1;
};

/// Averaged iterated filtering: theta_m is the mean of the filter means
/// (or lag-smoothed means when pert.lag > 0) after time k_start.
inline OptimizerTrace avif(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                           const IteratedConfig& cfg, const RngStream& rng, const AvifOptions& opts = {}) {
  const std::size_t N = model.num_times();
  if (opts.k_start >= N) throw ValidationError("k_start must be smaller than the number of observations");
  if (opts.average_from < 1 || opts.average_from > cfg.iterations)
    throw ValidationError("average_from must lie in 1..M");
  detail::IterationDriver d(model, data, cfg, theta0);
  const auto p = static_cast<Eigen::Index>(d.p_);
  ParamVector sum = ParamVector::Zero(p);
  for (std::size_t m = 1; m <= cfg.iterations; ++m) {
    auto pc = d.base_config(m, detail::ParamKernel::random_walk);
    pc.center = d.est_;
    if (cfg.pert.lag > 0) {
      pc.lag = cfg.pert.lag;
      pc.smooth_params = true;
    }
    const auto out = d.run(pc, m, rng);
    const ParamVector before = d.est_;
    auto mean_at = [&](std::size_t n, Eigen::Index i) {
      if (n == 0) return before[i];
      return cfg.pert.lag > 0 ? out.smooth_param_means(static_cast<Eigen::Index>(n), i)
                              : out.filter_means(static_cast<Eigen::Index>(n - 1), i);
    };
    for (auto i : d.walk_) {
      const auto ii = static_cast<Eigen::Index>(i);
      double value = 0.0;
      if (opts.literal_update) {
        value = (mean_at(N, ii) - mean_at(opts.k_start, ii)) / static_cast<double>(N - opts.k_start);
      } else {
        for (std::size_t n = opts.k_start + 1; n <= N; ++n) value += mean_at(n, ii);
        value /= static_cast<double>(N - opts.k_start);
      }
      d.set(i, value);
    }
    d.update_ivps(out);
    d.record(m, out, d.step_norm(before), 0);
    if (m >= opts.average_from) sum += d.natural_;
  }
  d.trace_.averaged = sum / static_cast<double>(cfg.iterations + 1 - opts.average_from);
  return std::move(d.trace_);
}

}  // namespace pompkit

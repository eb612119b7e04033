#pragma once

/// @file smoother.hpp Fixed-lag particle smoothing by ancestry tracing.

#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pompkit/filter.hpp"
#include "pompkit/model.hpp"
#include "pompkit/particle_pass.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

/// Parent indices of resampled particles for the most recent `depth` times.
///
/// Row n holds A[n, j]: the index of the time-(n-1) particle from which
/// resampled particle j at time n descends. Times are 1-based, indices
/// 0-based. Older rows are dropped once `depth` rows are held.
class AncestryBuffer {
 public:
  explicit AncestryBuffer(std::size_t depth) : depth_(depth) {
    if (depth == 0) throw std::invalid_argument("ancestry buffer depth must be positive");
  }

  /// Appends the row for the next time index.
  void push(std::vector<std::size_t> parents) {
    if (!rows_.empty() && parents.size() != rows_.front().size())
      throw std::invalid_argument("ancestry rows must all have the same length");
    rows_.push_back(std::move(parents));
    ++last_time_;
    if (rows_.size() > depth_) rows_.pop_front();
  }

  [[nodiscard]] std::size_t parent(std::size_t n, std::size_t j) const {
    if (n == 0 || n > last_time_ || last_time_ - n >= rows_.size())
      throw std::out_of_range("ancestry row for time " + std::to_string(n) + " is not held");
    const auto& row = rows_[rows_.size() - 1 - (last_time_ - n)];
    if (j >= row.size()) throw std::out_of_range("particle index out of range");
    return row[j];
  }

  [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
  [[nodiscard]] std::size_t last_time() const noexcept { return last_time_; }
  [[nodiscard]] std::size_t oldest_time() const noexcept { return last_time_ + 1 - rows_.size(); }

 private:
  std::size_t depth_;
  std::size_t last_time_ = 0;
  std::deque<std::vector<std::size_t>> rows_;
};

/// Index at time n - L of the ancestor of resampled particle j at time n.
inline std::size_t trace_ancestry(const AncestryBuffer& buffer, std::size_t n, std::size_t lag, std::size_t j) {
  if (lag > n) throw std::out_of_range("lag exceeds available history");
  std::size_t idx = j;
  for (std::size_t l = 0; l < lag; ++l) idx = buffer.parent(n - l, idx);
  return idx;
}

struct SmoothOptions {
  FilterOptions filter;
  /// Report the standard filter decomposition of the log-likelihood instead
  /// of the lag-shifted per-step terms.
  bool standard_decomposition = false;
  bool keep_samples = false;
};

struct SmoothResult {
  double loglik = 0.0;
  /// Per-step terms as reported (lag-shifted unless standard_decomposition).
  std::vector<double> cond_loglik;
  /// log(J^-1 sum_j w(n, j)) for n = 1..N.
  std::vector<double> filter_cond_loglik;
  std::size_t lag = 0;
  long n_failures = 0;
  /// Smoothed state means/variances, rows n = 1..N.
  RowMatrix state_means;
  RowMatrix state_vars;
  /// Smoothed parameter means/variances on the estimation scale, rows n = 0..N.
  RowMatrix param_means;
  RowMatrix param_vars;
  std::vector<Eigen::MatrixXd> param_covs;
  /// Unweighted smoothing samples X^F_{n+L, 1:J} traced to time n, for n = 1..N.
  std::vector<RowMatrix> samples;
  ParamVector ivp_swarm_mean;
  RowMatrix filter_means;
  RowMatrix pred_variances;
};

/// Lag-shifted per-step terms: w(n+L, .) for n <= N-L and w(N, .) afterwards.
inline std::vector<double> lag_shifted_terms(const std::vector<double>& filter_terms, std::size_t lag) {
  const std::size_t N = filter_terms.size();
  std::vector<double> out(N);
  for (std::size_t n = 1; n <= N; ++n) out[n - 1] = n + lag <= N ? filter_terms[n + lag - 1] : filter_terms[N - 1];
  return out;
}

namespace detail {

inline SmoothResult to_smooth_result(PassOutput&& out, std::size_t lag, const SmoothOptions& opts) {
  SmoothResult r;
  r.lag = lag;
  r.n_failures = out.n_failures;
  r.filter_cond_loglik = out.cond_loglik;
  r.cond_loglik = opts.standard_decomposition ? out.cond_loglik : lag_shifted_terms(out.cond_loglik, lag);
  r.loglik = 0.0;
  for (double c : r.cond_loglik) r.loglik += c;
  const auto N = static_cast<Eigen::Index>(out.cond_loglik.size());
  if (out.smooth_state_means.rows() == N + 1) {
    r.state_means = out.smooth_state_means.bottomRows(N);
    r.state_vars = out.smooth_state_vars.bottomRows(N);
  }
  r.param_means = std::move(out.smooth_param_means);
  r.param_vars = std::move(out.smooth_param_vars);
  r.param_covs = std::move(out.smooth_param_covs);
  if (!out.state_samples.empty()) r.samples.assign(out.state_samples.begin() + 1, out.state_samples.end());
  r.ivp_swarm_mean = std::move(out.ivp_swarm_mean);
  r.filter_means = std::move(out.filter_means);
  r.pred_variances = std::move(out.pred_variances);
  return r;
}

}  // namespace detail

/// Fixed-lag particle smoother at the natural-scale parameter `theta`.
inline SmoothResult psmooth(const ModelSpec& model, const ParamVector& theta, const TimeSeriesData& data,
                            std::size_t particles, std::size_t lag, const RngStream& rng,
                            const SmoothOptions& opts = {}) {
  if (lag >= model.num_times()) throw ValidationError("smoothing lag must be at most N - 1");
  detail::PassConfig cfg;
  cfg.particles = particles;
  cfg.filter = opts.filter;
  cfg.center = theta;
  cfg.lag = lag;
  cfg.smooth_states = true;
  cfg.smooth_params = true;
  cfg.keep_state_samples = opts.keep_samples;
  return detail::to_smooth_result(detail::run_pass(model, data, cfg, rng), lag, opts);
}

/// Fixed-lag smoother over the parameter-perturbed model at iteration `m`.
/// Lag is taken from `pert.lag` unless `lag_override` is given; it may equal
/// N, in which case every smoothed moment is read from the final cloud.
inline SmoothResult psmooth_perturbed(const ModelSpec& model, const ParamVector& theta_center,
                                      const PerturbationSpec& pert, std::size_t m, const TimeSeriesData& data,
                                      std::size_t particles, const RngStream& rng,
                                      const PerturbedPassOptions& pass_opts = {}, bool covariance = false,
                                      std::optional<std::size_t> lag_override = std::nullopt) {
  validate_params(model, theta_center);
  const std::size_t lag = lag_override.value_or(pert.lag);
  if (lag > model.num_times()) throw ValidationError("smoothing lag exceeds the number of observations");
  const auto scales = cooling(pert.cooling, pert.initial_multiplier, m);
  detail::PassConfig cfg;
  cfg.particles = particles;
  cfg.filter = pass_opts.filter;
  cfg.kernel = detail::ParamKernel::random_walk;
  cfg.pert = &pert;
  cfg.swarm_scale = scales.swarm_scale;
  cfg.walk_scale = scales.walk_scale;
  cfg.use_transforms = !pass_opts.natural_scale;
  cfg.center = pass_opts.natural_scale ? theta_center : model.to_estimation(theta_center);
  cfg.initial_swarm = pass_opts.initial_swarm;
  cfg.ivp_lag = pert.lag;
  cfg.lag = lag;
  cfg.smooth_params = true;
  cfg.param_covariance = covariance;
  cfg.filter_param_stats = true;
  SmoothOptions opts;
  opts.filter = pass_opts.filter;
  opts.standard_decomposition = true;
  return detail::to_smooth_result(detail::run_pass(model, data, cfg, rng), lag, opts);
}

}  // namespace pompkit

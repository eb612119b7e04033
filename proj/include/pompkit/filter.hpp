#pragma once

/// @file filter.hpp Bootstrap particle filter and its parameter-perturbed
/// variant used by the iterated algorithms.

#include <cstddef>
#include <vector>

#include "pompkit/model.hpp"
#include "pompkit/particle_pass.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

struct FilterResult {
  double loglik = 0.0;
  std::vector<double> cond_loglik;
  long n_failures = 0;
  /// theta_bar_n, N x p on the estimation scale (perturbed runs only).
  RowMatrix filter_means;
  /// V_bar_n: per-coordinate prediction variance at time n (perturbed runs only).
  RowMatrix pred_variances;
  /// Weighted state means sum_j w(n,j) X^P_{n,j}, N x d_x.
  RowMatrix filter_state_means;
  /// Parameter swarm after the last resampling step (perturbed runs only).
  RowMatrix final_swarm;
  /// Swarm mean at time L, used to update initial-value parameters.
  ParamVector ivp_swarm_mean;
};

namespace detail {

inline FilterResult to_filter_result(PassOutput&& out) {
  FilterResult r;
  r.loglik = out.loglik;
  r.cond_loglik = std::move(out.cond_loglik);
  r.n_failures = out.n_failures;
  r.filter_means = std::move(out.filter_means);
  r.pred_variances = std::move(out.pred_variances);
  r.filter_state_means = std::move(out.filter_state_means);
  r.final_swarm = std::move(out.final_swarm);
  r.ivp_swarm_mean = std::move(out.ivp_swarm_mean);
  return r;
}

}  // namespace detail

/// Bootstrap particle filter at the natural-scale parameter `theta`.
inline FilterResult pfilter(const ModelSpec& model, const ParamVector& theta, const TimeSeriesData& data,
                            std::size_t particles, const RngStream& rng, const FilterOptions& opts = {}) {
  detail::PassConfig cfg;
  cfg.particles = particles;
  cfg.filter = opts;
  cfg.center = theta;
  cfg.filter_state_means = true;
  return detail::to_filter_result(detail::run_pass(model, data, cfg, rng));
}

/// Extra inputs for a perturbed pass beyond the perturbation spec itself.
struct PerturbedPassOptions {
  FilterOptions filter;
  /// Optional J x p starting swarm (estimation scale) replacing draws around the center.
  const RowMatrix* initial_swarm = nullptr;
  /// Perturb on the natural scale instead of the model's transformed scale.
  bool natural_scale = false;
};

/// Particle filter with random-walk parameter perturbation at iteration `m`.
///
/// `theta_center` is on the natural scale. The starting swarm is drawn
/// N(center, (C a^(m-1) sd_i)^2); non-IVP coordinates then take a random-walk
/// step at each observation time. Filter means and prediction variances
/// are reported on the estimation scale.
inline FilterResult pfilter_perturbed(const ModelSpec& model, const ParamVector& theta_center,
                                      const PerturbationSpec& pert, std::size_t m, const TimeSeriesData& data,
                                      std::size_t particles, const RngStream& rng,
                                      const PerturbedPassOptions& opts = {}) {
  validate_params(model, theta_center);
  const auto scales = cooling(pert.cooling, pert.initial_multiplier, m);
  detail::PassConfig cfg;
  cfg.particles = particles;
  cfg.filter = opts.filter;
  cfg.kernel = detail::ParamKernel::random_walk;
  cfg.pert = &pert;
  cfg.swarm_scale = scales.swarm_scale;
  cfg.walk_scale = scales.walk_scale;
  cfg.use_transforms = !opts.natural_scale;
  cfg.center = opts.natural_scale ? theta_center : model.to_estimation(theta_center);
  cfg.initial_swarm = opts.initial_swarm;
  cfg.ivp_lag = pert.lag;
  cfg.filter_param_stats = true;
  cfg.filter_state_means = true;
  return detail::to_filter_result(detail::run_pass(model, data, cfg, rng));
}

}  // namespace pompkit

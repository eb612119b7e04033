#pragma once

/// @file bayes.hpp Particle marginal Metropolis-Hastings, particle iterated
/// filtering and effective sample size.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/filter.hpp"
#include "pompkit/model.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/rng.hpp"
#include "pompkit/score.hpp"

namespace pompkit {

/// Diagonal Gaussian random-walk proposal on the natural scale.
struct ProposalSpec {
  std::vector<double> scales;
  /// PIF drift step; defaults to half the mean squared nonzero scale.
  std::optional<double> epsilon;
  /// Particles for the PIF score pass; defaults to the filter's J.
  std::optional<std::size_t> score_particles;

  [[nodiscard]] double drift_step() const {
    if (epsilon) return *epsilon;
    double s = 0.0;
    std::size_t k = 0;
    for (double v : scales)
      if (v > 0.0) {
        s += v * v;
        ++k;
      }
    return k == 0 ? 0.0 : 0.5 * s / static_cast<double>(k);
  }
};

inline void validate(const ProposalSpec& prop, std::size_t num_params) {
  std::vector<std::string> v;
  if (prop.scales.size() != num_params)
    v.push_back("proposal has " + std::to_string(prop.scales.size()) + " scales, expected " +
                std::to_string(num_params));
  for (double s : prop.scales)
    if (!(s >= 0.0) || !std::isfinite(s)) {
      v.emplace_back("proposal scales must be finite and nonnegative");
      break;
    }
  if (prop.epsilon && !(*prop.epsilon >= 0.0)) v.emplace_back("PIF drift step must be nonnegative");
  if (prop.score_particles && *prop.score_particles == 0) v.emplace_back("score particles must be >= 1");
  if (!v.empty()) throw ValidationError(std::move(v));
}

struct Chain {
  std::vector<std::string> param_names;
  /// Row m-1 holds theta_m.
  RowMatrix samples;
  std::vector<double> loglik;
  std::vector<double> logprior;
  std::vector<char> accepted;
  ProposalSpec proposal;
  /// Drift step used (0 for PMMH).
  double epsilon = 0.0;

  [[nodiscard]] double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    std::size_t a = 0;
    for (char c : accepted) a += c != 0;
    return static_cast<double>(a) / static_cast<double>(accepted.size());
  }
};

struct McmcOptions {
  FilterOptions filter;
  /// Score estimator settings for PIF.
  ScoreMode score_mode = ScoreMode::theorem2;
};

/// Perturbation used for the PIF score pass, on the estimation scale: the
/// proposal scale mapped through the transform at `theta0`, with per-step
/// walk sd 0.01 times that.
inline PerturbationSpec pif_perturbation(const ModelSpec& model, const ProposalSpec& prop,
                                         const ParamVector& theta0) {
  validate(prop, model.num_params());
  PerturbationSpec p;
  p.sd.resize(prop.scales.size());
  for (std::size_t i = 0; i < p.sd.size(); ++i)
    p.sd[i] = prop.scales[i] *
              std::abs(transform_jacobian(model.params[i].transform, theta0[static_cast<Eigen::Index>(i)]));
  p.cooling = 0.5;
  p.initial_multiplier = 1.0;
  p.walk_multiplier = 0.01;
  return p;
}

/// theta + eps * (natural-scale score estimate) on the proposed coordinates.
inline ParamVector pif_drift_mean(const ModelSpec& model, const ParamVector& theta, const TimeSeriesData& data,
                                  const ProposalSpec& prop, double eps, const PerturbationSpec& pert,
                                  std::size_t particles, const RngStream& rng, const ScoreOptions& opts = {}) {
  const auto s = estimate_score(model, theta, data, pert, particles, rng, opts);
  ParamVector mean = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double g =
        opts.natural_scale ? s.score[i] : s.score[i] * transform_jacobian(model.params[ui].transform, theta[i]);
    if (prop.scales[ui] > 0.0 && std::isfinite(g)) mean[i] += eps * g;
  }
  return mean;
}

namespace detail {

inline double log_prior(const ModelSpec& model, const ParamVector& th) {
  const double lp = model.dprior(std::span<const double>(th.data(), static_cast<std::size_t>(th.size())));
  if (std::isnan(lp)) throw ModelContractError("dprior returned NaN");
  return lp;
}

// PMMH when drift is false; the score pass only runs for a nonzero step.
inline Chain run_chain(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                       std::size_t iterations, std::size_t particles, const ProposalSpec& prop,
                       const PerturbationSpec* pert, const RngStream& rng, const McmcOptions& opts) {
  validate(model, data);
  validate_params(model, theta0);
  validate(prop, model.num_params());
  if (pert) validate(*pert, model.num_params());
  if (!model.dprior) throw UnsupportedOperation("model '" + model.name + "' has no prior density");
  if (particles < 1) throw ValidationError("number of particles must be >= 1");
  const auto p = static_cast<Eigen::Index>(model.num_params());
  const double eps = pert ? prop.drift_step() : 0.0;

  Chain chain;
  chain.param_names = model.param_names();
  chain.proposal = prop;
  chain.epsilon = eps;
  chain.samples.resize(static_cast<Eigen::Index>(iterations), p);

  ParamVector cur = theta0;
  double cur_lp = log_prior(model, cur);
  if (!std::isfinite(cur_lp)) throw ValidationError("prior density is zero at the starting parameters");
  double cur_ll = pfilter(model, cur, data, particles, rng.substream("init", 0), opts.filter).loglik;

  ScoreOptions sopts;
  sopts.mode = opts.score_mode;
  sopts.filter = opts.filter;
  sopts.natural_scale = false;
  const std::size_t score_j = prop.score_particles.value_or(particles);

  for (std::size_t m = 1; m <= iterations; ++m) {
    const RngStream step = rng.substream("mcmc", m);
    const ParamVector mean =
        eps > 0.0 ? pif_drift_mean(model, cur, data, prop, eps, *pert, score_j, step.substream("score", 0), sopts)
                  : cur;
    auto eng = step.substream("propose", 0).engine(0);
    ParamVector cand = mean;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double z = eng.normal();
      const double sc = prop.scales[static_cast<std::size_t>(i)];
      if (sc > 0.0) cand[i] += sc * z;
    }
    const double log_u = std::log(step.substream("accept", 0).engine(0).uniform());
    bool accept = false;
    const double cand_lp = log_prior(model, cand);
    double cand_ll = -std::numeric_limits<double>::infinity();
    if (cand == cur) {
      accept = true;
      cand_ll = cur_ll;
    } else if (std::isfinite(cand_lp)) {
      cand_ll = pfilter(model, cand, data, particles, step.substream("pfilter", 0), opts.filter).loglik;
      accept = log_u < (cand_lp + cand_ll) - (cur_lp + cur_ll);
    }
    if (accept) {
      cur = cand;
      cur_lp = cand_lp;
      cur_ll = cand_ll;
    }
    const auto r = static_cast<Eigen::Index>(m - 1);
    chain.samples.row(r) = cur.transpose();
    chain.loglik.push_back(cur_ll);
    chain.logprior.push_back(cur_lp);
    chain.accepted.push_back(accept ? 1 : 0);
  }
  return chain;
}

}  // namespace detail

/// Particle marginal Metropolis-Hastings. The incumbent's likelihood
/// estimate is kept until a proposal is accepted.
inline Chain pmmh(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                  std::size_t iterations, std::size_t particles, const ProposalSpec& proposal, const RngStream& rng,
                  const McmcOptions& opts = {}) {
  return detail::run_chain(model, theta0, data, iterations, particles, proposal, nullptr, rng, opts);
}

/// Particle iterated filtering: PMMH whose proposal is centred at
/// theta + eps * score(theta), with the score from one perturbed pass on the
/// estimation scale (see pif_perturbation). The acceptance ratio treats the
/// proposal as symmetric.
inline Chain pif(const ModelSpec& model, const ParamVector& theta0, const TimeSeriesData& data,
                 std::size_t iterations, std::size_t particles, const ProposalSpec& proposal,
                 const PerturbationSpec& pert, const RngStream& rng, const McmcOptions& opts = {}) {
  return detail::run_chain(model, theta0, data, iterations, particles, proposal, &pert, rng, opts);
}

struct EssResult {
  double value = 0.0;
  bool degenerate = false;
};

/// Effective sample size M / (1 + 2 sum_k rho_k) with Geyer's initial
/// positive sequence truncation.
inline EssResult effective_sample_size(std::span<const double> x) {
  const std::size_t M = x.size();
  if (M < 10) throw ValidationError("effective sample size needs at least 10 values");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(M);
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < M; ++t) s += (x[t] - mean) * (x[t + k] - mean);
    return s / static_cast<double>(M);
  };
  const double g0 = autocov(0);
  if (!(g0 > 1e-24 * mean * mean)) return {0.0, true};
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < M; ++k) {
    const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / g0;
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  return {static_cast<double>(M) / tau, false};
}

inline double ess(std::span<const double> x) { return effective_sample_size(x).value; }

}  // namespace pompkit

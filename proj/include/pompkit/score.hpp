#pragma once

/// @file score.hpp Score estimates from the moments of a perturbed posterior.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/smoother.hpp"

namespace pompkit {

enum class ScoreMode { theorem1, theorem2 };

namespace detail {

// Indices with a positive diagonal entry in psi.
inline std::vector<std::size_t> active_coordinates(const Eigen::MatrixXd& psi) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < psi.rows(); ++i)
    if (psi(i, i) > 0.0) out.push_back(static_cast<std::size_t>(i));
  return out;
}

inline Eigen::MatrixXd restrict(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      out(a, b) = m(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                    static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
  return out;
}

}  // namespace detail

/// Score from per-time parameter means.
///
/// `means` has rows n = 0..N on the estimation scale. theorem1 uses row 0
/// only: scale^-2 Psi^-1 (mean_0 - center). theorem2 averages every row:
/// (N+1)^-1 scale^-2 Psi^-1 sum_n (mean_n - center). Coordinates with a zero
/// diagonal in `psi` are excluded and get a zero score.
inline ParamVector score_estimate(const RowMatrix& means, const ParamVector& center, const Eigen::MatrixXd& psi,
                                  double scale, ScoreMode mode) {
  const auto p = center.size();
  if (means.cols() != p || psi.rows() != p || psi.cols() != p || means.rows() < 1)
    throw ValidationError("score inputs have inconsistent dimensions");
  if (!(scale > 0.0)) throw ValidationError("score scale must be positive");
  const auto coords = detail::active_coordinates(psi);
  if (coords.empty()) throw ValidationError("perturbation covariance is singular");
  Eigen::LLT<Eigen::MatrixXd> llt(detail::restrict(psi, coords));
  if (llt.info() != Eigen::Success) throw ValidationError("perturbation covariance is singular");

  ParamVector diff = ParamVector::Zero(p);
  if (mode == ScoreMode::theorem1) {
    diff = means.row(0).transpose() - center;
  } else {
    for (Eigen::Index n = 0; n < means.rows(); ++n) diff += means.row(n).transpose() - center;
    diff /= static_cast<double>(means.rows());
  }
  Eigen::VectorXd sub(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t a = 0; a < coords.size(); ++a) sub[static_cast<Eigen::Index>(a)] = diff[static_cast<Eigen::Index>(coords[a])];
  const Eigen::VectorXd solved = llt.solve(sub) / (scale * scale);
  ParamVector out = ParamVector::Zero(p);
  for (std::size_t a = 0; a < coords.size(); ++a) out[static_cast<Eigen::Index>(coords[a])] = solved[static_cast<Eigen::Index>(a)];
  return out;
}

/// Psi over every parameter: the perturbation covariance with IVP rows and
/// columns zeroed.
inline Eigen::MatrixXd score_psi(const PerturbationSpec& pert, std::size_t num_params) {
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_params), static_cast<Eigen::Index>(num_params));
  const auto coords = pert.walk_coordinates();
  const Eigen::MatrixXd sub = pert.psi(coords);
  for (std::size_t a = 0; a < coords.size(); ++a)
    for (std::size_t b = 0; b < coords.size(); ++b)
      psi(static_cast<Eigen::Index>(coords[a]), static_cast<Eigen::Index>(coords[b])) =
          sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  return psi;
}

struct ScoreResult {
  ParamVector score;
  double loglik = 0.0;
  long n_failures = 0;
};

struct ScoreOptions {
  ScoreMode mode = ScoreMode::theorem2;
  FilterOptions filter;
  bool natural_scale = false;
  /// Smoothing lag; defaults to N, so every time is read from the final cloud.
  std::optional<std::size_t> lag;
};

/// One perturbed smoothing pass around `theta` (natural scale) and the
/// resulting score estimate on the perturbation scale. The starting swarm
/// has sd `pert.initial_multiplier * sd_i`; per-step walk sd is
/// `pert.walk_multiplier * sd_i`.
inline ScoreResult estimate_score(const ModelSpec& model, const ParamVector& theta, const TimeSeriesData& data,
                                  const PerturbationSpec& pert, std::size_t particles, const RngStream& rng,
                                  const ScoreOptions& opts = {}) {
  PerturbedPassOptions pass;
  pass.filter = opts.filter;
  pass.natural_scale = opts.natural_scale;
  const std::size_t lag = opts.lag.value_or(model.num_times());
  const auto r = psmooth_perturbed(model, theta, pert, 1, data, particles, rng, pass, false, lag);
  const ParamVector center = opts.natural_scale ? theta : model.to_estimation(theta);
  ScoreResult out;
  out.score = score_estimate(r.param_means, center, score_psi(pert, model.num_params()), pert.initial_multiplier,
                             opts.mode);
  out.loglik = r.loglik;
  out.n_failures = r.n_failures;
  return out;
}

}  // namespace pompkit

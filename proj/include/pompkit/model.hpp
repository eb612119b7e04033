#pragma once

/// @file model.hpp Plug-and-play POMP model definition and observed data.
///
/// A model is described only through simulators (`rinit`, `rprocess`,
/// `rmeasure`) and a pointwise measurement log-density (`dmeasure`).
/// Transition densities are never evaluated.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

using ParamVector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Map from the natural parameter scale to the unconstrained scale on which
/// perturbation and optimization happen.
enum class Transform { identity, log, logit };

inline double to_estimation_scale(Transform t, double natural) {
  switch (t) {
    case Transform::log:
      return std::log(natural);
    case Transform::logit:
      return std::log(natural / (1.0 - natural));
    case Transform::identity:
      break;
  }
  return natural;
}

inline double to_natural_scale(Transform t, double estimation) {
  switch (t) {
    case Transform::log:
      return std::exp(estimation);
    case Transform::logit:
      return 1.0 / (1.0 + std::exp(-estimation));
    case Transform::identity:
      break;
  }
  return estimation;
}

/// d(estimation)/d(natural) at `natural`.
inline double transform_jacobian(Transform t, double natural) {
  switch (t) {
    case Transform::log:
      return 1.0 / natural;
    case Transform::logit:
      return 1.0 / (natural * (1.0 - natural));
    case Transform::identity:
      break;
  }
  return 1.0;
}

struct ParamInfo {
  std::string name;
  Transform transform = Transform::identity;
};

struct ModelSpec {
  using RInit = std::function<void(std::span<const double> theta, RandomEngine& rng,
                                   std::span<double> x0)>;
  /// Advances `x` in place from `t_from` to `t_to`.
  using RProcess = std::function<void(std::span<double> x, std::span<const double> theta,
                                      double t_from, double t_to, RandomEngine& rng)>;
  /// Log-density of `y` given `x`; -inf marks an impossible observation.
  using DMeasure = std::function<double(std::span<const double> y, std::span<const double> x,
                                        std::span<const double> theta, double t)>;
  using RMeasure = std::function<void(std::span<const double> x, std::span<const double> theta,
                                      double t, RandomEngine& rng, std::span<double> y)>;
  using DPrior = std::function<double(std::span<const double> theta)>;

  std::string name;
  std::size_t dim_state = 0;
  std::size_t dim_obs = 0;
  std::vector<ParamInfo> params;
  /// Zero-based positions of initial-value parameters.
  std::vector<std::size_t> ivp_indices;
  double t0 = 0.0;
  std::vector<double> times;

  RInit rinit;
  RProcess rprocess;
  DMeasure dmeasure;
  RMeasure rmeasure;
  DPrior dprior;

  [[nodiscard]] std::size_t num_params() const noexcept { return params.size(); }
  [[nodiscard]] std::size_t num_times() const noexcept { return times.size(); }

  [[nodiscard]] std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const auto& p : params) names.push_back(p.name);
    return names;
  }

  [[nodiscard]] std::optional<std::size_t> param_index(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name == name) return i;
    return std::nullopt;
  }

  [[nodiscard]] std::size_t require_param(std::string_view name) const {
    auto idx = param_index(name);
    if (!idx) throw ValidationError("unknown parameter '" + std::string(name) + "'");
    return *idx;
  }

  [[nodiscard]] bool is_ivp(std::size_t i) const {
    return std::find(ivp_indices.begin(), ivp_indices.end(), i) != ivp_indices.end();
  }

  [[nodiscard]] ParamVector to_estimation(const ParamVector& natural) const {
    ParamVector out(natural.size());
    for (Eigen::Index i = 0; i < natural.size(); ++i)
      out[i] = to_estimation_scale(params[static_cast<std::size_t>(i)].transform, natural[i]);
    return out;
  }

  [[nodiscard]] ParamVector to_natural(const ParamVector& estimation) const {
    ParamVector out(estimation.size());
    for (Eigen::Index i = 0; i < estimation.size(); ++i)
      out[i] = to_natural_scale(params[static_cast<std::size_t>(i)].transform, estimation[i]);
    return out;
  }

  [[nodiscard]] bool has_transforms() const {
    return std::any_of(params.begin(), params.end(),
                       [](const ParamInfo& p) { return p.transform != Transform::identity; });
  }
};

/// Observations y_{1:N} at times t_{1:N}; one row per observation.
struct TimeSeriesData {
  std::vector<double> times;
  RowMatrix observations;

  [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
  [[nodiscard]] std::span<const double> row(std::size_t n) const {
    return {observations.data() + n * static_cast<std::size_t>(observations.cols()),
            static_cast<std::size_t>(observations.cols())};
  }
};

inline std::vector<std::string> model_violations(const ModelSpec& model) {
  std::vector<std::string> v;
  if (model.dim_state == 0) v.emplace_back("dim_state must be positive");
  if (model.dim_obs == 0) v.emplace_back("dim_obs must be positive");
  if (model.times.empty()) v.emplace_back("model has no observation times");
  if (!model.times.empty() && !(model.t0 < model.times.front()))
    v.emplace_back("t0 must precede the first observation time");
  for (std::size_t n = 1; n < model.times.size(); ++n) {
    if (!(model.times[n - 1] < model.times[n])) {
      v.emplace_back("observation times must be strictly increasing");
      break;
    }
  }
  std::set<std::string> seen;
  for (const auto& p : model.params)
    if (!seen.insert(p.name).second) v.push_back("duplicate parameter name '" + p.name + "'");
  for (auto i : model.ivp_indices)
    if (i >= model.params.size()) v.push_back("IVP index " + std::to_string(i) + " out of range");
  if (!model.rinit) v.emplace_back("rinit hook missing");
  if (!model.rprocess) v.emplace_back("rprocess hook missing");
  if (!model.dmeasure) v.emplace_back("dmeasure hook missing");
  return v;
}

inline void validate(const ModelSpec& model) {
  if (auto v = model_violations(model); !v.empty()) throw ValidationError(std::move(v));
}

inline void validate(const ModelSpec& model, const TimeSeriesData& data) {
  auto v = model_violations(model);
  if (static_cast<std::size_t>(data.observations.rows()) != data.times.size())
    v.emplace_back("observation row count does not match number of times");
  if (static_cast<std::size_t>(data.observations.cols()) != model.dim_obs)
    v.emplace_back("observation column count does not match dim_obs");
  if (data.times != model.times) v.emplace_back("data times do not match model times");
  if (!data.observations.allFinite()) v.emplace_back("observations must be finite");
  if (!v.empty()) throw ValidationError(std::move(v));
}

inline void validate_params(const ModelSpec& model, const ParamVector& theta) {
  std::vector<std::string> v;
  if (static_cast<std::size_t>(theta.size()) != model.num_params())
    v.push_back("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                std::to_string(model.num_params()));
  else if (!theta.allFinite())
    v.emplace_back("parameter vector has non-finite entries");
  if (!v.empty()) throw ValidationError(std::move(v));
}

}  // namespace pompkit

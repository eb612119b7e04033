#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"

namespace pompkit {

/// Random-walk parameter perturbation used by the iterated algorithms.
///
/// All scales refer to the estimation (transformed) scale of each parameter.
/// At iteration m the starting swarm has sd `C a^(m-1) sd_i` and each time
/// step adds noise with sd `walk_multiplier a^(m-1) sd_i` to non-IVP
/// coordinates.
struct PerturbationSpec {
  std::vector<double> sd;
  double cooling = 0.95;
  double initial_multiplier = 1.0;
  std::vector<std::size_t> ivp_indices;
  std::size_t lag = 0;
  /// Ratio of the per-step walk sd to the swarm sd; 1 gives the standard
  /// iterated-filtering kernel, small values approximate a static perturbation.
  double walk_multiplier = 1.0;
  /// Optional full covariance replacing diag(sd^2).
  std::optional<Eigen::MatrixXd> covariance;

  [[nodiscard]] bool is_ivp(std::size_t i) const {
    for (auto k : ivp_indices)
      if (k == i) return true;
    return false;
  }

  [[nodiscard]] double sd_of(std::size_t i) const {
    if (covariance) return std::sqrt((*covariance)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    return sd[i];
  }

  /// Coordinates that move by random walk: positive scale and not an IVP.
  [[nodiscard]] std::vector<std::size_t> walk_coordinates() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sd.size(); ++i)
      if (!is_ivp(i) && sd_of(i) > 0.0) out.push_back(i);
    return out;
  }

  /// Psi restricted to `coords`.
  [[nodiscard]] Eigen::MatrixXd psi(const std::vector<std::size_t>& coords) const {
    const auto k = static_cast<Eigen::Index>(coords.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        if (covariance)
          out(a, b) = (*covariance)(static_cast<Eigen::Index>(coords[static_cast<std::size_t>(a)]),
                                    static_cast<Eigen::Index>(coords[static_cast<std::size_t>(b)]));
        else if (a == b)
          out(a, b) = sd[coords[static_cast<std::size_t>(a)]] * sd[coords[static_cast<std::size_t>(a)]];
      }
    }
    return out;
  }

  /// Zero scales everywhere; the perturbed filter then reduces to the plain one.
  static PerturbationSpec none(std::size_t num_params) {
    PerturbationSpec p;
    p.sd.assign(num_params, 0.0);
    p.initial_multiplier = 1.0;
    return p;
  }
};

inline std::vector<std::string> perturbation_violations(const PerturbationSpec& pert,
                                                        std::size_t num_params) {
  std::vector<std::string> v;
  if (pert.sd.size() != num_params)
    v.push_back("perturbation sd has length " + std::to_string(pert.sd.size()) + ", expected " +
                std::to_string(num_params));
  for (double s : pert.sd)
    if (!(s >= 0.0) || !std::isfinite(s)) {
      v.emplace_back("perturbation sd entries must be finite and nonnegative");
      break;
    }
  if (!(pert.cooling > 0.0 && pert.cooling < 1.0)) v.emplace_back("cooling rate must lie in (0, 1)");
  if (!(pert.initial_multiplier >= 0.0)) v.emplace_back("initial multiplier must be nonnegative");
  if (!(pert.walk_multiplier >= 0.0)) v.emplace_back("walk multiplier must be nonnegative");
  for (auto i : pert.ivp_indices)
    if (i >= num_params) v.push_back("IVP index " + std::to_string(i) + " out of range");
  if (pert.covariance) {
    const auto& c = *pert.covariance;
    if (c.rows() != static_cast<Eigen::Index>(num_params) || c.cols() != c.rows())
      v.emplace_back("perturbation covariance has wrong shape");
    else if (!c.isApprox(c.transpose()))
      v.emplace_back("perturbation covariance is not symmetric");
  }
  return v;
}

inline void validate(const PerturbationSpec& pert, std::size_t num_params) {
  if (auto v = perturbation_violations(pert, num_params); !v.empty()) throw ValidationError(std::move(v));
}

struct CoolingScales {
  double swarm_scale;
  double walk_scale;
};

/// Geometric cooling at iteration m (1-based): (C a^(m-1), a^(m-1)).
inline CoolingScales cooling(double a, double C, std::size_t m) {
  if (m < 1) throw ValidationError("cooling iteration index must be >= 1");
  const double walk = std::pow(a, static_cast<double>(m - 1));
  return {C * walk, walk};
}

}  // namespace pompkit

#pragma once

/// @file benchmarks.hpp The bivariate linear-Gaussian (ou2) and Gompertz
/// benchmark models together with their exact likelihoods.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/kalman.hpp"
#include "pompkit/model.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

namespace detail {

inline std::vector<double> unit_times(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1);
  return t;
}

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

// ---------------------------------------------------------------- ou2

namespace ou2 {
enum Index : std::size_t { alpha_1, alpha_2, alpha_3, alpha_4, sigma_1, sigma_2, sigma_3, tau, x1_0, x2_0 };
}

/// One ou2 transition with explicit noise (xi1, xi2).
///   x1' = a1 x1 + a3 x2 + s1 xi1
///   x2' = a2 x1 + a4 x2 + s2 xi1 + s3 xi2
inline std::array<double, 2> ou2_step(std::span<const double> x, std::span<const double> th, double xi1,
                                      double xi2) {
  return {th[ou2::alpha_1] * x[0] + th[ou2::alpha_3] * x[1] + th[ou2::sigma_1] * xi1,
          th[ou2::alpha_2] * x[0] + th[ou2::alpha_4] * x[1] + th[ou2::sigma_2] * xi1 + th[ou2::sigma_3] * xi2};
}

inline ParamVector ou2_truth() {
  ParamVector th(10);
  th << 0.8, -0.5, 0.3, 0.9, 3.0, -0.5, 2.0, 1.0, -3.0, 4.0;
  return th;
}

inline ModelSpec ou2_model(std::size_t n_times = 100) {
  ModelSpec m;
  m.name = "ou2";
  m.dim_state = 2;
  m.dim_obs = 2;
  for (const char* name : {"alpha.1", "alpha.2", "alpha.3", "alpha.4", "sigma.1", "sigma.2", "sigma.3", "tau",
                           "x1.0", "x2.0"})
    m.params.push_back({name, Transform::identity});
  m.ivp_indices = {ou2::x1_0, ou2::x2_0};
  m.t0 = 0.0;
  m.times = detail::unit_times(n_times);
  m.rinit = [](std::span<const double> th, RandomEngine&, std::span<double> x0) {
    x0[0] = th[ou2::x1_0];
    x0[1] = th[ou2::x2_0];
  };
  m.rprocess = [](std::span<double> x, std::span<const double> th, double, double, RandomEngine& rng) {
    const double xi1 = rng.normal();
    const double xi2 = rng.normal();
    const auto next = ou2_step(x, th, xi1, xi2);
    x[0] = next[0];
    x[1] = next[1];
  };
  m.dmeasure = [](std::span<const double> y, std::span<const double> x, std::span<const double> th, double) {
    const double tau = th[ou2::tau];
    return detail::log_normal_pdf(y[0], x[0], tau) + detail::log_normal_pdf(y[1], x[1], tau);
  };
  m.rmeasure = [](std::span<const double> x, std::span<const double> th, double, RandomEngine& rng,
                  std::span<double> y) {
    y[0] = x[0] + th[ou2::tau] * rng.normal();
    y[1] = x[1] + th[ou2::tau] * rng.normal();
  };
  return m;
}

inline LinearGaussian ou2_linear_gaussian(const ParamVector& th) {
  if (th.size() != 10) throw ValidationError("ou2 parameter vector must have length 10");
  if (!(th[ou2::tau] >= 0.0)) throw ValidationError("ou2 measurement sd must be nonnegative");
  LinearGaussian lg;
  lg.A.resize(2, 2);
  lg.A << th[ou2::alpha_1], th[ou2::alpha_3], th[ou2::alpha_2], th[ou2::alpha_4];
  Eigen::Matrix2d L;
  L << th[ou2::sigma_1], 0.0, th[ou2::sigma_2], th[ou2::sigma_3];
  lg.Q = L * L.transpose();
  lg.H = Eigen::MatrixXd::Identity(2, 2);
  lg.R = th[ou2::tau] * th[ou2::tau] * Eigen::MatrixXd::Identity(2, 2);
  lg.c = Eigen::VectorXd::Zero(2);
  lg.x0 = Eigen::Vector2d(th[ou2::x1_0], th[ou2::x2_0]);
  lg.P0 = Eigen::MatrixXd::Zero(2, 2);
  return lg;
}

/// Exact log-likelihood, filter means and smoother means for ou2.
inline KalmanResult ou2_kalman(const ParamVector& th, const TimeSeriesData& data) {
  const auto lg = ou2_linear_gaussian(th);
  auto r = kalman_filter(lg, data.observations);
  rts_smooth(lg, r);
  return r;
}

inline double ou2_kalman_loglik(const ParamVector& th, const TimeSeriesData& data) {
  return kalman_filter(ou2_linear_gaussian(th), data.observations).loglik;
}

// ---------------------------------------------------------------- Gompertz

namespace gompertz {
enum Index : std::size_t { r, K, sigma, tau, X_0 };
}

/// X' = K^(1 - e^{-r dt}) X^(e^{-r dt}) eps.
inline double gompertz_step(double X, std::span<const double> th, double dt, double eps) {
  const double s = std::exp(-th[gompertz::r] * dt);
  return std::pow(th[gompertz::K], 1.0 - s) * std::pow(X, s) * eps;
}

inline ParamVector gompertz_defaults() {
  ParamVector th(5);
  th << 0.1, 1.0, 0.1, 0.1, 1.0;
  return th;
}

/// Gompertz model with log transforms on every parameter and a uniform(0, 1)
/// prior on r, sigma and tau.
inline ModelSpec gompertz_model(std::size_t n_times = 100) {
  ModelSpec m;
  m.name = "gompertz";
  m.dim_state = 1;
  m.dim_obs = 1;
  for (const char* name : {"r", "K", "sigma", "tau", "X.0"}) m.params.push_back({name, Transform::log});
  m.ivp_indices = {gompertz::X_0};
  m.t0 = 0.0;
  m.times = detail::unit_times(n_times);
  m.rinit = [](std::span<const double> th, RandomEngine&, std::span<double> x0) { x0[0] = th[gompertz::X_0]; };
  m.rprocess = [](std::span<double> x, std::span<const double> th, double t_from, double t_to,
                  RandomEngine& rng) {
    const double eps = std::exp(th[gompertz::sigma] * rng.normal());
    x[0] = gompertz_step(x[0], th, t_to - t_from, eps);
  };
  m.dmeasure = [](std::span<const double> y, std::span<const double> x, std::span<const double> th, double) {
    if (!(y[0] > 0.0) || !(x[0] > 0.0)) return -std::numeric_limits<double>::infinity();
    const double ly = std::log(y[0]);
    return detail::log_normal_pdf(ly, std::log(x[0]), th[gompertz::tau]) - ly;
  };
  m.rmeasure = [](std::span<const double> x, std::span<const double> th, double, RandomEngine& rng,
                  std::span<double> y) { y[0] = x[0] * std::exp(th[gompertz::tau] * rng.normal()); };
  m.dprior = [](std::span<const double> th) {
    for (auto i : {gompertz::r, gompertz::sigma, gompertz::tau})
      if (!(th[i] > 0.0 && th[i] < 1.0)) return -std::numeric_limits<double>::infinity();
    return 0.0;
  };
  return m;
}

/// Exact log-likelihood of Y via a scalar Kalman filter on log Y plus the
/// change-of-variables term -sum log y.
inline double gompertz_exact_loglik(const ParamVector& th, const TimeSeriesData& data) {
  if (th.size() != 5) throw ValidationError("Gompertz parameter vector must have length 5");
  const double s = std::exp(-th[gompertz::r]);
  const double drift = (1.0 - s) * std::log(th[gompertz::K]);
  const double q = th[gompertz::sigma] * th[gompertz::sigma];
  const double rr = th[gompertz::tau] * th[gompertz::tau];
  double m = std::log(th[gompertz::X_0]);
  double P = 0.0;
  double ll = 0.0;
  for (Eigen::Index n = 0; n < data.observations.rows(); ++n) {
    const double y = data.observations(n, 0);
    if (!(y > 0.0)) throw ValidationError("Gompertz observations must be positive");
    const double ly = std::log(y);
    const double mp = drift + s * m;
    const double Pp = s * s * P + q;
    const double S = Pp + rr;
    if (!(S > 0.0)) throw ValidationError("Gompertz innovation variance is zero");
    const double innov = ly - mp;
    ll += -0.5 * (std::log(2.0 * std::numbers::pi * S) + innov * innov / S) - ly;
    const double K = Pp / S;
    m = mp + K * innov;
    P = (1.0 - K) * Pp;
  }
  return ll;
}

/// The same quantity through the generic multivariate filter.
inline double gompertz_generic_loglik(const ParamVector& th, const TimeSeriesData& data) {
  const double s = std::exp(-th[gompertz::r]);
  LinearGaussian lg;
  lg.A = Eigen::MatrixXd::Constant(1, 1, s);
  lg.c = Eigen::VectorXd::Constant(1, (1.0 - s) * std::log(th[gompertz::K]));
  lg.Q = Eigen::MatrixXd::Constant(1, 1, th[gompertz::sigma] * th[gompertz::sigma]);
  lg.H = Eigen::MatrixXd::Identity(1, 1);
  lg.R = Eigen::MatrixXd::Constant(1, 1, th[gompertz::tau] * th[gompertz::tau]);
  lg.x0 = Eigen::VectorXd::Constant(1, std::log(th[gompertz::X_0]));
  lg.P0 = Eigen::MatrixXd::Zero(1, 1);
  RowMatrix logy = data.observations.array().log().matrix();
  return kalman_filter(lg, logy).loglik - logy.sum();
}

}  // namespace pompkit

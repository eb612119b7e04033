#pragma once

/// @file kalman.hpp Exact filtering and smoothing for linear-Gaussian
/// state-space models, used as likelihood oracles.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"

namespace pompkit {

/// x_n = c + A x_{n-1} + w_n, w_n ~ N(0, Q); y_n = H x_n + v_n, v_n ~ N(0, R).
struct LinearGaussian {
  Eigen::MatrixXd A, Q, H, R;
  Eigen::VectorXd c;
  Eigen::VectorXd x0;
  Eigen::MatrixXd P0;
};

struct KalmanResult {
  double loglik = 0.0;
  std::vector<double> cond_loglik;
  /// E[x_n | y_{1:n}], rows n = 1..N.
  RowMatrix filter_means;
  std::vector<Eigen::MatrixXd> filter_covs;
  RowMatrix pred_means;
  std::vector<Eigen::MatrixXd> pred_covs;
  /// E[x_n | y_{1:N}], rows n = 1..N (filled by rts_smooth).
  RowMatrix smoother_means;
  std::vector<Eigen::MatrixXd> smoother_covs;
};

namespace detail {

inline bool is_psd(const Eigen::MatrixXd& m) {
  if (!m.isApprox(m.transpose(), 1e-10)) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().size() == 0 || es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.norm());
}

}  // namespace detail

inline KalmanResult kalman_filter(const LinearGaussian& lg, const RowMatrix& y) {
  const auto d = lg.A.rows();
  const auto N = y.rows();
  if (lg.A.cols() != d || lg.Q.rows() != d || lg.x0.size() != d || lg.P0.rows() != d || lg.H.cols() != d ||
      lg.R.rows() != lg.H.rows() || y.cols() != lg.H.rows())
    throw ValidationError("linear-Gaussian model has inconsistent dimensions");
  if (!detail::is_psd(lg.Q) || !detail::is_psd(lg.R) || !detail::is_psd(lg.P0))
    throw ValidationError("covariance matrices must be symmetric positive semidefinite");
  const Eigen::VectorXd c = lg.c.size() == d ? lg.c : Eigen::VectorXd::Zero(d);

  KalmanResult r;
  r.cond_loglik.resize(static_cast<std::size_t>(N));
  r.filter_means.resize(N, d);
  r.pred_means.resize(N, d);
  Eigen::VectorXd m = lg.x0;
  Eigen::MatrixXd P = lg.P0;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::VectorXd mp = c + lg.A * m;
    const Eigen::MatrixXd Pp = lg.A * P * lg.A.transpose() + lg.Q;
    r.pred_means.row(n) = mp.transpose();
    r.pred_covs.push_back(Pp);
    const Eigen::VectorXd innov = y.row(n).transpose() - lg.H * mp;
    Eigen::MatrixXd S = lg.H * Pp * lg.H.transpose() + lg.R;
    S = 0.5 * (S + S.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw ValidationError("innovation covariance is singular");
    const Eigen::VectorXd sol = llt.solve(innov);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double ll = -0.5 * (static_cast<double>(innov.size()) * log2pi + logdet + innov.dot(sol));
    r.cond_loglik[static_cast<std::size_t>(n)] = ll;
    r.loglik += ll;
    const Eigen::MatrixXd K = llt.solve(lg.H * Pp).transpose();
    m = mp + K * innov;
    const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(d, d) - K * lg.H;
    P = IKH * Pp * IKH.transpose() + K * lg.R * K.transpose();
    r.filter_means.row(n) = m.transpose();
    r.filter_covs.push_back(P);
  }
  return r;
}

/// Rauch-Tung-Striebel backward pass over a completed filter result.
inline void rts_smooth(const LinearGaussian& lg, KalmanResult& r) {
  const auto N = r.filter_means.rows();
  const auto d = r.filter_means.cols();
  r.smoother_means.resize(N, d);
  r.smoother_covs.assign(static_cast<std::size_t>(N), Eigen::MatrixXd());
  if (N == 0) return;
  Eigen::VectorXd ms = r.filter_means.row(N - 1).transpose();
  Eigen::MatrixXd Ps = r.filter_covs.back();
  r.smoother_means.row(N - 1) = ms.transpose();
  r.smoother_covs.back() = Ps;
  for (Eigen::Index n = N - 2; n >= 0; --n) {
    const auto& Pf = r.filter_covs[static_cast<std::size_t>(n)];
    const auto& Pp = r.pred_covs[static_cast<std::size_t>(n + 1)];
    const Eigen::MatrixXd G = Pp.ldlt().solve(lg.A * Pf).transpose();
    const Eigen::VectorXd mf = r.filter_means.row(n).transpose();
    ms = mf + G * (ms - r.pred_means.row(n + 1).transpose());
    Ps = Pf + G * (Ps - Pp) * G.transpose();
    r.smoother_means.row(n) = ms.transpose();
    r.smoother_covs[static_cast<std::size_t>(n)] = Ps;
  }
}

/// E[x_n | y_{1:min(n+L, N)}] for n = 1..N, by smoothing each truncated series.
inline RowMatrix fixed_lag_smoother_means(const LinearGaussian& lg, const RowMatrix& y, std::size_t lag) {
  const auto N = y.rows();
  RowMatrix out(N, lg.A.rows());
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::Index last = std::min<Eigen::Index>(N - 1, n + static_cast<Eigen::Index>(lag));
    auto r = kalman_filter(lg, y.topRows(last + 1));
    rts_smooth(lg, r);
    out.row(n) = r.smoother_means.row(n);
  }
  return out;
}

}  // namespace pompkit

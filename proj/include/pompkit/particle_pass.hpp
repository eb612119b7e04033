#pragma once

/// @file particle_pass.hpp The single sequential Monte Carlo loop behind the
/// filter, the fixed-lag smoother and every iterated algorithm.
///
/// One pass propagates J particles through the data, optionally carrying a
/// per-particle parameter vector that is perturbed either as a random walk
/// (iterated filtering) or as fresh draws around a center (accelerated
/// iterated filtering). Ancestry for the last L+1 generations is kept in a
/// ring buffer so that lag-L smoothed moments can be read off without
/// storing the whole genealogy.
///
/// Random numbers are drawn from per-(time, purpose) substreams with one
/// engine slot per particle, so output does not depend on `workers`.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/model.hpp"
#include "pompkit/parallel.hpp"
#include "pompkit/perturbation.hpp"
#include "pompkit/resample.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

struct FilterOptions {
  Resampler resampler = Resampler::systematic;
  /// Maximum number of zero-weight steps tolerated; negative means unlimited.
  long max_fail = -1;
  unsigned workers = 1;
};

/// Log-likelihood assigned to a step at which every particle had zero weight.
inline constexpr double kFailureLogLik = -690.77552789821368;  // log(1e-300)

namespace detail {

enum class ParamKernel { fixed, random_walk, white_noise };

struct PassConfig {
  std::size_t particles = 0;
  FilterOptions filter;

  ParamKernel kernel = ParamKernel::fixed;
  const PerturbationSpec* pert = nullptr;
  double swarm_scale = 0.0;
  double walk_scale = 0.0;
  /// Natural scale for the fixed kernel, estimation scale otherwise.
  ParamVector center;
  /// Optional J x p starting swarm on the estimation scale.
  const RowMatrix* initial_swarm = nullptr;
  bool use_transforms = true;
  std::size_t ivp_lag = 0;

  std::size_t lag = 0;
  bool smooth_params = false;
  bool smooth_states = false;
  bool param_covariance = false;
  bool keep_state_samples = false;
  bool filter_param_stats = false;
  bool filter_state_means = false;
};

struct PassOutput {
  double loglik = 0.0;
  std::vector<double> cond_loglik;
  long n_failures = 0;

  RowMatrix filter_means;    // N x p
  RowMatrix pred_variances;  // N x p

  RowMatrix smooth_param_means;  // (N+1) x p, row n is time n
  RowMatrix smooth_param_vars;   // (N+1) x p
  std::vector<Eigen::MatrixXd> smooth_param_covs;
  RowMatrix smooth_state_means;  // (N+1) x d_x
  RowMatrix smooth_state_vars;   // (N+1) x d_x
  std::vector<RowMatrix> state_samples;  // per time n >= 1, J x d_x

  RowMatrix filter_state_means;  // N x d_x

  ParamVector ivp_swarm_mean;
  RowMatrix final_swarm;  // J x p, estimation scale
};

// Lower-triangular factor for correlated draws over `coords`.
inline Eigen::MatrixXd kernel_factor(const PerturbationSpec& pert, const std::vector<std::size_t>& coords) {
  Eigen::MatrixXd psi = pert.psi(coords);
  if (!pert.covariance) return psi.diagonal().cwiseSqrt().asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success) throw ValidationError("perturbation covariance is not positive definite");
  return llt.matrixL();
}

class ParticlePass {
 public:
  ParticlePass(const ModelSpec& model, const TimeSeriesData& data, const PassConfig& cfg)
      : model_(model), data_(data), cfg_(cfg) {}

  PassOutput run(const RngStream& rng) {
    setup();
    initialize(rng);
    for (std::size_t n = 1; n <= n_times_; ++n) step(n, rng);
    finish();
    return std::move(out_);
  }

 private:
  const ModelSpec& model_;
  const TimeSeriesData& data_;
  const PassConfig& cfg_;

  std::size_t J_ = 0, p_ = 0, dx_ = 0, n_times_ = 0, lag_ = 0;
  bool perturbed_ = false, transforms_ = false, smoothing_ = false;

  std::vector<double> theta_, theta_next_, theta_nat_, x_, x_next_, w_;
  std::vector<std::size_t> k_, k_prev_;
  ParamVector fixed_theta_;

  std::vector<std::size_t> init_coords_, walk_coords_;
  Eigen::MatrixXd init_factor_, walk_factor_;
  std::vector<double> walk_var_;  // per-parameter variance of one walk step
  std::vector<double> prev_pred_var_;

  struct Slot {
    std::vector<double> theta;
    std::vector<double> x;
    std::vector<std::size_t> parent;
  };
  std::vector<Slot> ring_;
  std::vector<std::size_t> trace_;

  PassOutput out_;

  Slot& slot(std::size_t t) { return ring_[t % ring_.size()]; }

  std::span<const double> theta_row_nat(std::size_t j) const {
    if (!perturbed_) return {fixed_theta_.data(), p_};
    if (transforms_) return {theta_nat_.data() + j * p_, p_};
    return {theta_.data() + j * p_, p_};
  }

  void setup() {
    J_ = cfg_.particles;
    if (J_ < 1) throw ValidationError("number of particles must be >= 1");
    validate(model_, data_);
    p_ = model_.num_params();
    dx_ = model_.dim_state;
    n_times_ = model_.num_times();
    perturbed_ = cfg_.kernel != ParamKernel::fixed;
    if (perturbed_) {
      if (cfg_.pert == nullptr) throw ValidationError("perturbed pass requires a perturbation spec");
      validate(*cfg_.pert, p_);
    }
    if (static_cast<std::size_t>(cfg_.center.size()) != p_)
      throw ValidationError("parameter vector length does not match the model");
    if (!cfg_.center.allFinite()) throw ValidationError("parameter vector has non-finite entries");
    transforms_ = perturbed_ && cfg_.use_transforms && model_.has_transforms();
    lag_ = std::min(cfg_.lag, n_times_);
    smoothing_ = cfg_.smooth_params || cfg_.smooth_states || cfg_.keep_state_samples;

    x_.assign(J_ * dx_, 0.0);
    x_next_.assign(J_ * dx_, 0.0);
    w_.assign(J_, 0.0);
    k_.assign(J_, 0);
    k_prev_.resize(J_);
    std::iota(k_prev_.begin(), k_prev_.end(), std::size_t{0});

    if (perturbed_) {
      theta_.assign(J_ * p_, 0.0);
      theta_next_.assign(J_ * p_, 0.0);
      if (transforms_) theta_nat_.assign(J_ * p_, 0.0);
      const auto& pert = *cfg_.pert;
      for (std::size_t i = 0; i < p_; ++i)
        if (pert.sd_of(i) > 0.0) init_coords_.push_back(i);
      walk_coords_ = pert.walk_coordinates();
      init_factor_ = kernel_factor(pert, init_coords_) * cfg_.swarm_scale;
      walk_factor_ = kernel_factor(pert, walk_coords_) * (cfg_.walk_scale * pert.walk_multiplier);
      walk_var_.assign(p_, 0.0);
      for (std::size_t a = 0; a < walk_coords_.size(); ++a) {
        const auto ia = static_cast<Eigen::Index>(a);
        walk_var_[walk_coords_[a]] = walk_factor_.row(ia).squaredNorm();
      }
    } else {
      fixed_theta_ = cfg_.center;
    }

    out_.cond_loglik.assign(n_times_, 0.0);
    if (cfg_.filter_param_stats) {
      out_.filter_means = RowMatrix::Zero(static_cast<Eigen::Index>(n_times_), static_cast<Eigen::Index>(p_));
      out_.pred_variances = RowMatrix::Zero(static_cast<Eigen::Index>(n_times_), static_cast<Eigen::Index>(p_));
    }
    if (cfg_.filter_state_means)
      out_.filter_state_means = RowMatrix::Zero(static_cast<Eigen::Index>(n_times_), static_cast<Eigen::Index>(dx_));
    if (smoothing_) {
      ring_.resize(lag_ + 1);
      for (auto& s : ring_) {
        if (cfg_.smooth_params && perturbed_) s.theta.resize(J_ * p_);
        if (cfg_.smooth_states || cfg_.keep_state_samples) s.x.resize(J_ * dx_);
        s.parent.resize(J_);
      }
      trace_.resize(J_);
      const auto rows = static_cast<Eigen::Index>(n_times_ + 1);
      if (cfg_.smooth_params) {
        out_.smooth_param_means = RowMatrix::Zero(rows, static_cast<Eigen::Index>(p_));
        out_.smooth_param_vars = RowMatrix::Zero(rows, static_cast<Eigen::Index>(p_));
        if (cfg_.param_covariance)
          out_.smooth_param_covs.assign(n_times_ + 1, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_),
                                                                           static_cast<Eigen::Index>(p_)));
      }
      if (cfg_.smooth_states) {
        out_.smooth_state_means = RowMatrix::Zero(rows, static_cast<Eigen::Index>(dx_));
        out_.smooth_state_vars = RowMatrix::Zero(rows, static_cast<Eigen::Index>(dx_));
      }
      if (cfg_.keep_state_samples) out_.state_samples.resize(n_times_ + 1);
    }
  }

  void refresh_natural(std::size_t lo, std::size_t hi) {
    if (!transforms_) return;
    for (std::size_t j = lo; j < hi; ++j)
      for (std::size_t i = 0; i < p_; ++i)
        theta_nat_[j * p_ + i] = to_natural_scale(model_.params[i].transform, theta_[j * p_ + i]);
  }

  // Adds factor * z to theta row j over coords.
  void add_correlated_noise(std::size_t j, const std::vector<std::size_t>& coords, const Eigen::MatrixXd& factor,
                            RandomEngine& eng) {
    const std::size_t k = coords.size();
    if (k == 0) return;
    double z[64];
    double* zp = z;
    std::vector<double> zbig;
    if (k > 64) {
      zbig.resize(k);
      zp = zbig.data();
    }
    for (std::size_t a = 0; a < k; ++a) zp[a] = eng.normal();
    if (!cfg_.pert->covariance) {
      for (std::size_t a = 0; a < k; ++a) {
        const auto ia = static_cast<Eigen::Index>(a);
        theta_[j * p_ + coords[a]] += factor(ia, ia) * zp[a];
      }
      return;
    }
    for (std::size_t a = 0; a < k; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b <= a; ++b)
        acc += factor(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * zp[b];
      theta_[j * p_ + coords[a]] += acc;
    }
  }

  void initialize(const RngStream& rng) {
    const unsigned workers = cfg_.filter.workers;
    if (perturbed_) {
      const RngStream perturb = rng.substream("perturb", 0);
      parallel_chunks(J_, workers, 256, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
          for (std::size_t i = 0; i < p_; ++i)
            theta_[j * p_ + i] = cfg_.initial_swarm != nullptr
                                     ? (*cfg_.initial_swarm)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                                     : cfg_.center[static_cast<Eigen::Index>(i)];
          if (cfg_.swarm_scale > 0.0) {
            auto eng = perturb.engine(j);
            add_correlated_noise(j, init_coords_, init_factor_, eng);
          }
        }
        refresh_natural(lo, hi);
      });
    }
    const RngStream init = rng.substream("rinit");
    parallel_chunks(J_, workers, 256, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t j = lo; j < hi; ++j) {
        auto eng = init.engine(j);
        model_.rinit(theta_row_nat(j), eng, std::span<double>(x_.data() + j * dx_, dx_));
      }
    });

    if (perturbed_) {
      // Prediction variance at time 1: walk step plus spread of the starting swarm.
      prev_pred_var_.assign(p_, 0.0);
      for (std::size_t i = 0; i < p_; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < J_; ++j) mean += theta_[j * p_ + i];
        mean /= static_cast<double>(J_);
        double var = 0.0;
        for (std::size_t j = 0; j < J_; ++j) {
          const double d = theta_[j * p_ + i] - mean;
          var += d * d;
        }
        prev_pred_var_[i] = var / static_cast<double>(J_) + walk_var_[i];
      }
      if (cfg_.ivp_lag == 0) out_.ivp_swarm_mean = swarm_mean();
    }

    if (smoothing_) {
      Slot& s0 = slot(0);
      if (!s0.theta.empty()) s0.theta = theta_;
      if (!s0.x.empty()) s0.x = x_;
      if (lag_ == 0) {
        std::fill(w_.begin(), w_.end(), 1.0 / static_cast<double>(J_));
        std::iota(trace_.begin(), trace_.end(), std::size_t{0});
        record_smoothed(0);
      }
    }
  }

  ParamVector swarm_mean() const {
    ParamVector mean = ParamVector::Zero(static_cast<Eigen::Index>(p_));
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t i = 0; i < p_; ++i) mean[static_cast<Eigen::Index>(i)] += theta_[j * p_ + i];
    return mean / static_cast<double>(J_);
  }

  void step(std::size_t n, const RngStream& rng) {
    const unsigned workers = cfg_.filter.workers;
    const double t_from = n == 1 ? model_.t0 : model_.times[n - 2];
    const double t_to = model_.times[n - 1];
    const auto y = data_.row(n - 1);

    const RngStream perturb = rng.substream("perturb", n);
    const RngStream propagate = rng.substream("propagate", n);
    parallel_chunks(J_, workers, 256, [&](std::size_t lo, std::size_t hi) {
      if (perturbed_ && !walk_coords_.empty() && cfg_.walk_scale > 0.0) {
        for (std::size_t j = lo; j < hi; ++j) {
          if (cfg_.kernel == ParamKernel::white_noise)
            for (auto i : walk_coords_) theta_[j * p_ + i] = cfg_.center[static_cast<Eigen::Index>(i)];
          auto eng = perturb.engine(j);
          add_correlated_noise(j, walk_coords_, walk_factor_, eng);
        }
        refresh_natural(lo, hi);
      } else if (perturbed_ && cfg_.kernel == ParamKernel::white_noise) {
        for (std::size_t j = lo; j < hi; ++j)
          for (auto i : walk_coords_) theta_[j * p_ + i] = cfg_.center[static_cast<Eigen::Index>(i)];
        refresh_natural(lo, hi);
      }
      for (std::size_t j = lo; j < hi; ++j) {
        auto eng = propagate.engine(j);
        const auto th = theta_row_nat(j);
        const std::span<double> x(x_.data() + j * dx_, dx_);
        model_.rprocess(x, th, t_from, t_to, eng);
        const double lw = model_.dmeasure(y, x, th, t_to);
        if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity())
          throw ModelContractError("dmeasure returned a non-finite log-density (" + std::to_string(lw) +
                                   ") at time index " + std::to_string(n));
        w_[j] = lw;
      }
    });

    if (smoothing_) {
      Slot& s = slot(n);
      if (!s.theta.empty()) s.theta = theta_;
      if (!s.x.empty()) s.x = x_;
      s.parent = k_prev_;
    }

    auto log_mean = normalize_log_weights_inplace(w_);
    if (!log_mean) {
      ++out_.n_failures;
      if (cfg_.filter.max_fail >= 0 && out_.n_failures > cfg_.filter.max_fail)
        throw FilteringLimitExceeded(out_.n_failures, cfg_.filter.max_fail);
      std::fill(w_.begin(), w_.end(), 1.0 / static_cast<double>(J_));
      log_mean = kFailureLogLik;
    }
    out_.cond_loglik[n - 1] = *log_mean;

    if (cfg_.filter_param_stats && perturbed_) record_filter_param_stats(n);
    if (cfg_.filter_state_means) {
      for (std::size_t d = 0; d < dx_; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < J_; ++j) acc += w_[j] * x_[j * dx_ + d];
        out_.filter_state_means(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(d)) = acc;
      }
    }

    if (smoothing_ && n >= lag_) {
      trace_from(n, n - lag_);
      record_smoothed(n - lag_);
    }

    auto eng = rng.substream("resample", n).engine();
    resample(cfg_.filter.resampler, w_, k_, eng);
    for (std::size_t j = 0; j < J_; ++j)
      std::copy_n(x_.begin() + static_cast<std::ptrdiff_t>(k_[j] * dx_), dx_,
                  x_next_.begin() + static_cast<std::ptrdiff_t>(j * dx_));
    x_.swap(x_next_);
    if (perturbed_) {
      for (std::size_t j = 0; j < J_; ++j)
        std::copy_n(theta_.begin() + static_cast<std::ptrdiff_t>(k_[j] * p_), p_,
                    theta_next_.begin() + static_cast<std::ptrdiff_t>(j * p_));
      theta_.swap(theta_next_);
      if (transforms_) {
        for (std::size_t j = 0; j < J_; ++j)
          std::copy_n(theta_nat_.begin() + static_cast<std::ptrdiff_t>(k_[j] * p_), p_,
                      theta_next_.begin() + static_cast<std::ptrdiff_t>(j * p_));
        theta_nat_.swap(theta_next_);
        theta_next_.resize(J_ * p_);
      }
      if (cfg_.ivp_lag == n) out_.ivp_swarm_mean = swarm_mean();
    }
    if (cfg_.keep_state_samples && n >= lag_) record_samples(n);
    k_prev_.swap(k_);
  }

  void record_filter_param_stats(std::size_t n) {
    const auto row = static_cast<Eigen::Index>(n - 1);
    for (std::size_t i = 0; i < p_; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < J_; ++j) mean += w_[j] * theta_[j * p_ + i];
      double var = 0.0;
      for (std::size_t j = 0; j < J_; ++j) {
        const double d = theta_[j * p_ + i] - mean;
        var += w_[j] * d * d;
      }
      const auto col = static_cast<Eigen::Index>(i);
      out_.filter_means(row, col) = mean;
      out_.pred_variances(row, col) = prev_pred_var_[i];
      prev_pred_var_[i] = walk_var_[i] + var;
    }
  }

  // trace_[j] <- index at time `target` of the ancestor of prediction particle j at time `from`.
  void trace_from(std::size_t from, std::size_t target) {
    std::iota(trace_.begin(), trace_.end(), std::size_t{0});
    for (std::size_t t = from; t > target; --t) {
      const auto& parent = slot(t).parent;
      for (auto& idx : trace_) idx = parent[idx];
    }
  }

  void record_smoothed(std::size_t time) {
    const auto row = static_cast<Eigen::Index>(time);
    const Slot& s = slot(time);
    if (cfg_.smooth_params) {
      if (perturbed_) {
        std::vector<double> mean(p_, 0.0);
        for (std::size_t j = 0; j < J_; ++j) {
          const double* th = s.theta.data() + trace_[j] * p_;
          for (std::size_t i = 0; i < p_; ++i) mean[i] += w_[j] * th[i];
        }
        for (std::size_t i = 0; i < p_; ++i) out_.smooth_param_means(row, static_cast<Eigen::Index>(i)) = mean[i];
        if (cfg_.param_covariance) {
          Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
          for (std::size_t j = 0; j < J_; ++j) {
            const double* th = s.theta.data() + trace_[j] * p_;
            for (std::size_t a = 0; a < p_; ++a) {
              const double da = th[a] - mean[a];
              if (da == 0.0) continue;
              for (std::size_t b = 0; b <= a; ++b)
                cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += w_[j] * da * (th[b] - mean[b]);
            }
          }
          cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose().triangularView<Eigen::StrictlyUpper>();
          for (std::size_t i = 0; i < p_; ++i)
            out_.smooth_param_vars(row, static_cast<Eigen::Index>(i)) =
                cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
          out_.smooth_param_covs[time] = std::move(cov);
        } else {
          for (std::size_t i = 0; i < p_; ++i) {
            double var = 0.0;
            for (std::size_t j = 0; j < J_; ++j) {
              const double d = s.theta[trace_[j] * p_ + i] - mean[i];
              var += w_[j] * d * d;
            }
            out_.smooth_param_vars(row, static_cast<Eigen::Index>(i)) = var;
          }
        }
      } else {
        out_.smooth_param_means.row(row) = fixed_theta_.transpose();
      }
    }
    if (cfg_.smooth_states) {
      for (std::size_t d = 0; d < dx_; ++d) {
        double mean = 0.0;
        for (std::size_t j = 0; j < J_; ++j) mean += w_[j] * s.x[trace_[j] * dx_ + d];
        double var = 0.0;
        for (std::size_t j = 0; j < J_; ++j) {
          const double dv = s.x[trace_[j] * dx_ + d] - mean;
          var += w_[j] * dv * dv;
        }
        out_.smooth_state_means(row, static_cast<Eigen::Index>(d)) = mean;
        out_.smooth_state_vars(row, static_cast<Eigen::Index>(d)) = var;
      }
    }
  }

  // Unweighted lag-L smoothing sample: the resampled cloud at time n traced to n - L.
  void record_samples(std::size_t n) {
    const std::size_t time = n - lag_;
    std::vector<std::size_t> idx(k_.begin(), k_.end());
    for (std::size_t t = n; t > time; --t) {
      const auto& parent = slot(t).parent;
      for (auto& i : idx) i = parent[i];
    }
    const Slot& s = slot(time);
    RowMatrix sample(static_cast<Eigen::Index>(J_), static_cast<Eigen::Index>(dx_));
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t d = 0; d < dx_; ++d)
        sample(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) = s.x[idx[j] * dx_ + d];
    out_.state_samples[time] = std::move(sample);
  }

  void finish() {
    // Times after N - L are read from the final cloud traced back N - n generations.
    if (smoothing_ && lag_ > 0 && (cfg_.smooth_params || cfg_.smooth_states)) {
      std::iota(trace_.begin(), trace_.end(), std::size_t{0});
      for (std::size_t t = n_times_; t + lag_ > n_times_; --t) {
        record_smoothed(t);
        const auto& parent = slot(t).parent;
        for (auto& idx : trace_) idx = parent[idx];
      }
    }
    if (smoothing_ && lag_ > 0 && cfg_.keep_state_samples) {
      std::vector<std::size_t> idx(k_prev_.begin(), k_prev_.end());
      for (std::size_t t = n_times_; t + lag_ > n_times_; --t) {
        const Slot& s = slot(t);
        RowMatrix sample(static_cast<Eigen::Index>(J_), static_cast<Eigen::Index>(dx_));
        for (std::size_t j = 0; j < J_; ++j)
          for (std::size_t d = 0; d < dx_; ++d)
            sample(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) = s.x[idx[j] * dx_ + d];
        out_.state_samples[t] = std::move(sample);
        for (auto& i : idx) i = s.parent[i];
      }
    }
    out_.loglik = std::accumulate(out_.cond_loglik.begin(), out_.cond_loglik.end(), 0.0);
    if (perturbed_) {
      out_.final_swarm = Eigen::Map<const RowMatrix>(theta_.data(), static_cast<Eigen::Index>(J_),
                                                     static_cast<Eigen::Index>(p_));
      if (cfg_.ivp_lag > n_times_) out_.ivp_swarm_mean = swarm_mean();
    }
  }
};

inline PassOutput run_pass(const ModelSpec& model, const TimeSeriesData& data, const PassConfig& cfg,
                           const RngStream& rng) {
  ParticlePass pass(model, data, cfg);
  return pass.run(rng);
}

}  // namespace detail
}  // namespace pompkit

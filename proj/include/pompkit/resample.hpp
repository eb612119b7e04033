#pragma once

/// @file resample.hpp Weight normalization and resampling kernels.
///
/// Indices are zero-based throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pompkit/errors.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

enum class Resampler { systematic, multinomial };

struct NormalizedWeights {
  std::vector<double> weights;
  /// log(J^-1 sum w), the conditional log-likelihood contribution of the step.
  double log_mean = 0.0;
};

/// Turns log-weights into normalized weights in place using a max shift.
/// Returns log(J^-1 sum exp(logw)), or nullopt when every weight is zero.
inline std::optional<double> normalize_log_weights_inplace(std::span<double> logw) {
  const double max_lw = *std::max_element(logw.begin(), logw.end());
  if (max_lw == -std::numeric_limits<double>::infinity()) return std::nullopt;
  double sum = 0.0;
  for (double& v : logw) {
    v = std::exp(v - max_lw);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : logw) v *= inv;
  return max_lw + std::log(sum / static_cast<double>(logw.size()));
}

inline NormalizedWeights normalize_log_weights(std::span<const double> logw, long time_index = -1) {
  NormalizedWeights out{std::vector<double>(logw.begin(), logw.end()), 0.0};
  auto log_mean = normalize_log_weights_inplace(out.weights);
  if (!log_mean) throw FilteringFailure(time_index);
  out.log_mean = *log_mean;
  return out;
}

/// Normalizes nonnegative raw weights.
inline NormalizedWeights normalize_weights(std::span<const double> raw, long time_index = -1) {
  if (raw.empty()) throw ValidationError("weight vector is empty");
  std::vector<double> logw(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!(raw[j] >= 0.0) || !std::isfinite(raw[j]))
      throw ValidationError("weights must be nonnegative and finite");
    logw[j] = std::log(raw[j]);
  }
  return normalize_log_weights(logw, time_index);
}

namespace detail {

// Largest index carrying positive weight; guards against cumulative sums that
// fall a rounding error short of 1.
inline std::size_t last_positive(std::span<const double> w) {
  std::size_t k = w.size();
  while (k > 0 && !(w[k - 1] > 0.0)) --k;
  return k == 0 ? 0 : k - 1;
}

}  // namespace detail

/// Systematic (low-variance) resampling of `count` indices from normalized
/// weights. Output is sorted ascending; index m appears floor(count*w_m) or
/// ceil(count*w_m) times.
inline void systematic_resample(std::span<const double> w, std::span<std::size_t> out,
                                RandomEngine& rng) {
  const std::size_t count = out.size();
  if (count == 0) return;
  const std::size_t last = detail::last_positive(w);
  const double step = 1.0 / static_cast<double>(count);
  const double u0 = rng.uniform() * step;
  std::size_t m = 0;
  double cumulative = w[0];
  for (std::size_t j = 0; j < count; ++j) {
    const double u = u0 + static_cast<double>(j) * step;
    while (cumulative < u && m < last) cumulative += w[++m];
    out[j] = m;
  }
}

inline std::vector<std::size_t> systematic_resample(std::span<const double> w, std::size_t count,
                                                    const RngStream& rng) {
  std::vector<std::size_t> out(count);
  auto engine = rng.engine();
  systematic_resample(w, out, engine);
  return out;
}

/// Multinomial resampling: i.i.d. categorical draws, returned sorted.
inline void multinomial_resample(std::span<const double> w, std::span<std::size_t> out,
                                 RandomEngine& rng) {
  const std::size_t count = out.size();
  if (count == 0) return;
  const std::size_t last = detail::last_positive(w);
  // Sorted uniforms via normalized exponential spacings, then one merge pass.
  std::vector<double> spacings(count + 1);
  double total = 0.0;
  for (auto& s : spacings) {
    s = -std::log(rng.uniform());
    total += s;
  }
  std::size_t m = 0;
  double cumulative = w[0];
  double u = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    u += spacings[j] / total;
    while (cumulative < u && m < last) cumulative += w[++m];
    out[j] = m;
  }
}

inline std::vector<std::size_t> multinomial_resample(std::span<const double> w, std::size_t count,
                                                     const RngStream& rng) {
  std::vector<std::size_t> out(count);
  auto engine = rng.engine();
  multinomial_resample(w, out, engine);
  return out;
}

inline void resample(Resampler kind, std::span<const double> w, std::span<std::size_t> out,
                     RandomEngine& rng) {
  if (kind == Resampler::multinomial)
    multinomial_resample(w, out, rng);
  else
    systematic_resample(w, out, rng);
}

}  // namespace pompkit

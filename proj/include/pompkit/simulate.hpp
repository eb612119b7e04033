#pragma once

#include <span>

#include "pompkit/model.hpp"
#include "pompkit/rng.hpp"

namespace pompkit {

struct Simulation {
  TimeSeriesData data;
  /// Rows x_0 .. x_N.
  RowMatrix states;
};

/// Draws one latent trajectory and observation series at natural-scale `theta`.
inline Simulation simulate(const ModelSpec& model, const ParamVector& theta, const RngStream& rng) {
  validate(model);
  validate_params(model, theta);
  if (!model.rmeasure) throw UnsupportedOperation("model '" + model.name + "' has no rmeasure hook");

  const std::size_t n_times = model.num_times();
  const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));

  Simulation sim;
  sim.data.times = model.times;
  sim.data.observations.resize(static_cast<Eigen::Index>(n_times),
                               static_cast<Eigen::Index>(model.dim_obs));
  sim.states.resize(static_cast<Eigen::Index>(n_times + 1),
                    static_cast<Eigen::Index>(model.dim_state));

  auto state_row = [&](std::size_t n) {
    return std::span<double>(sim.states.data() + n * model.dim_state, model.dim_state);
  };

  auto init_engine = rng.substream("rinit").engine();
  model.rinit(th, init_engine, state_row(0));

  double t_prev = model.t0;
  for (std::size_t n = 0; n < n_times; ++n) {
    auto x = state_row(n + 1);
    std::copy_n(sim.states.data() + n * model.dim_state, model.dim_state, x.begin());
    auto proc_engine = rng.substream("rprocess", n + 1).engine();
    model.rprocess(x, th, t_prev, model.times[n], proc_engine);
    auto meas_engine = rng.substream("rmeasure", n + 1).engine();
    model.rmeasure(x, th, model.times[n], meas_engine,
                   std::span<double>(sim.data.observations.data() + n * model.dim_obs,
                                     model.dim_obs));
    t_prev = model.times[n];
  }
  return sim;
}

}  // namespace pompkit

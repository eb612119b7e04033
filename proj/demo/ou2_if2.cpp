// Fit alpha.2 and alpha.3 of the ou2 model with IF2 and compare against the
// exact Kalman likelihood.
#include <cstdio>

#include "pompkit/benchmarks.hpp"
#include "pompkit/optimizers.hpp"
#include "pompkit/simulate.hpp"

int main() {
  using namespace pompkit;
  const auto model = ou2_model();
  const auto data = simulate(model, ou2_truth(), RngStream(1)).data;

  IteratedConfig cfg;
  cfg.iterations = 20;
  cfg.particles = 1000;
  cfg.pert.sd.assign(model.num_params(), 0.0);
  cfg.pert.sd[ou2::alpha_2] = cfg.pert.sd[ou2::alpha_3] = 0.02;
  cfg.pert.cooling = 0.97;

  auto start = ou2_truth();
  start[ou2::alpha_2] = -0.9;
  start[ou2::alpha_3] = 0.9;

  const auto trace = if2(model, start, data, cfg, RngStream(42));
  for (std::size_t m = 0; m < trace.iterations(); ++m)
    std::printf("%2zu  loglik %9.3f  alpha.2 %7.4f  alpha.3 %7.4f\n", m + 1, trace.loglik[m],
                trace.theta(static_cast<Eigen::Index>(m), ou2::alpha_2),
                trace.theta(static_cast<Eigen::Index>(m), ou2::alpha_3));
  const auto est = trace.estimate();
  std::printf("exact loglik at start %.3f, at estimate %.3f\n", ou2_kalman_loglik(start, data),
              ou2_kalman_loglik(est, data));
}

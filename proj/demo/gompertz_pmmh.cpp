// Short particle-marginal Metropolis-Hastings run on the Gompertz model.
#include <cstdio>

#include "pompkit/bayes.hpp"
#include "pompkit/benchmarks.hpp"
#include "pompkit/simulate.hpp"

int main() {
  using namespace pompkit;
  const auto model = gompertz_model();
  const auto data = simulate(model, gompertz_defaults(), RngStream(1)).data;

  ProposalSpec prop;
  prop.scales = {0.01, 0.0, 0.01, 0.01, 0.0};
  const auto chain = pmmh(model, gompertz_defaults(), data, 2000, 100, prop, RngStream(7));

  std::printf("acceptance %.3f\n", chain.acceptance_rate());
  for (const char* name : {"r", "sigma", "tau"}) {
    const auto i = static_cast<Eigen::Index>(*model.param_index(name));
    std::vector<double> v;
    for (Eigen::Index m = 500; m < chain.samples.rows(); ++m) v.push_back(chain.samples(m, i));
    double mean = 0.0;
    for (double x : v) mean += x;
    std::printf("%-6s mean %.4f  ESS %.1f\n", name, mean / static_cast<double>(v.size()), ess(v));
  }
}

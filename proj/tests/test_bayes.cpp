#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pompkit/bayes.hpp"
#include "pompkit/benchmarks.hpp"
#include "test_support.hpp"

using namespace pompkit;
using testsupport::mean;
using testsupport::sd;

namespace {

// mean_model with a standard normal prior on mu.
ModelSpec prior_mean_model(std::size_t n_times) {
  auto m = testsupport::mean_model(n_times);
  m.dprior = [](std::span<const double> th) { return detail::log_normal_pdf(th[0], 0.0, 1.0); };
  return m;
}

std::vector<double> column(const Chain& c, Eigen::Index j, std::size_t from = 0) {
  std::vector<double> v;
  for (auto m = static_cast<Eigen::Index>(from); m < c.samples.rows(); ++m) v.push_back(c.samples(m, j));
  return v;
}

}  // namespace

TEST(Pmmh, ConjugateGaussianPosteriorMean) {
  const auto model = prior_mean_model(1);
  TimeSeriesData data;
  data.times = {1.0};
  data.observations = RowMatrix::Constant(1, 1, 1.5);
  // y ~ N(mu, 2), mu ~ N(0, 1): posterior N(y / 3, 2 / 3).
  ProposalSpec prop;
  prop.scales = {1.0};
  const auto c = pmmh(model, ParamVector::Zero(1), data, 20000, 200, prop, RngStream(3));
  const auto v = column(c, 0, 1000);
  const double se = sd(v) / std::sqrt(ess(v));
  EXPECT_NEAR(mean(v), 0.5, 3.0 * se);
  EXPECT_NEAR(sd(v), std::sqrt(2.0 / 3.0), 0.05);
}

TEST(Pmmh, ZeroScalesGiveConstantChain) {
  const auto model = prior_mean_model(5);
  const auto data = simulate(model, ParamVector::Constant(1, 0.3), RngStream(1)).data;
  ProposalSpec prop;
  prop.scales = {0.0};
  const auto c = pmmh(model, ParamVector::Constant(1, 0.3), data, 50, 20, prop, RngStream(2));
  for (Eigen::Index m = 0; m < 50; ++m) EXPECT_EQ(c.samples(m, 0), 0.3);
  EXPECT_EQ(c.acceptance_rate(), 1.0);
  for (double l : c.loglik) EXPECT_EQ(l, c.loglik.front());
}

TEST(Pmmh, RejectedRowsRepeatPreviousRow) {
  const auto model = prior_mean_model(10);
  const auto data = simulate(model, ParamVector::Constant(1, 0.3), RngStream(1)).data;
  ProposalSpec prop;
  prop.scales = {2.0};
  const auto c = pmmh(model, ParamVector::Constant(1, 0.3), data, 300, 50, prop, RngStream(2));
  int rejections = 0;
  for (Eigen::Index m = 1; m < 300; ++m) {
    if (c.accepted[static_cast<std::size_t>(m)]) continue;
    ++rejections;
    EXPECT_EQ(c.samples(m, 0), c.samples(m - 1, 0));
    EXPECT_EQ(c.loglik[static_cast<std::size_t>(m)], c.loglik[static_cast<std::size_t>(m - 1)]);
  }
  EXPECT_GT(rejections, 0);
}

TEST(Pmmh, DecisionsInvariantToLoglikShift) {
  const auto model = prior_mean_model(10);
  auto shifted = model;
  shifted.dmeasure = [base = model.dmeasure](auto y, auto x, auto th, double t) { return base(y, x, th, t) + 0.75; };
  const auto data = simulate(model, ParamVector::Constant(1, 0.3), RngStream(1)).data;
  ProposalSpec prop;
  prop.scales = {0.3};
  const auto a = pmmh(model, ParamVector::Constant(1, 0.3), data, 200, 50, prop, RngStream(8));
  const auto b = pmmh(shifted, ParamVector::Constant(1, 0.3), data, 200, 50, prop, RngStream(8));
  EXPECT_EQ(a.accepted, b.accepted);
  for (Eigen::Index m = 0; m < 200; ++m) EXPECT_EQ(a.samples(m, 0), b.samples(m, 0));
}

TEST(Pmmh, ValidatesInputs) {
  const auto bare = testsupport::mean_model(5);
  const auto data = simulate(bare, ParamVector::Zero(1), RngStream(1)).data;
  ProposalSpec prop;
  prop.scales = {0.1};
  EXPECT_THROW(pmmh(bare, ParamVector::Zero(1), data, 10, 10, prop, RngStream(1)), UnsupportedOperation);
  const auto g = gompertz_model();
  const auto gd = simulate(g, gompertz_defaults(), RngStream(1)).data;
  ParamVector bad = gompertz_defaults();
  bad[gompertz::sigma] = 2.0;
  ProposalSpec gp;
  gp.scales = {0.01, 0.0, 0.01, 0.01, 0.0};
  EXPECT_THROW(pmmh(g, bad, gd, 10, 10, gp, RngStream(1)), ValidationError);
  gp.scales = {0.01};
  EXPECT_THROW(pmmh(g, gompertz_defaults(), gd, 10, 10, gp, RngStream(1)), ValidationError);
}

TEST(Pif, ZeroDriftIsPmmh) {
  const auto model = gompertz_model(30);
  const auto data = simulate(model, gompertz_defaults(), RngStream(4)).data;
  ProposalSpec prop;
  prop.scales = {0.01, 0.0, 0.01, 0.01, 0.0};
  prop.epsilon = 0.0;
  const auto pert = pif_perturbation(model, prop, gompertz_defaults());
  const auto a = pmmh(model, gompertz_defaults(), data, 100, 50, prop, RngStream(5));
  const auto b = pif(model, gompertz_defaults(), data, 100, 50, prop, pert, RngStream(5));
  EXPECT_EQ(a.accepted, b.accepted);
  EXPECT_EQ(a.loglik, b.loglik);
  for (Eigen::Index m = 0; m < 100; ++m)
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(a.samples(m, i), b.samples(m, i));
}

TEST(Pif, DriftFollowsAnalyticScore) {
  const auto model = prior_mean_model(50);
  const auto data = simulate(model, ParamVector::Zero(1), RngStream(5)).data;
  const double theta = data.observations.mean() + 0.4;
  double score = 0.0;
  for (Eigen::Index n = 0; n < 50; ++n) score += (data.observations(n, 0) - theta) / 2.0;
  ProposalSpec prop;
  prop.scales = {0.02};
  const double eps = prop.drift_step();
  auto pert = pif_perturbation(model, prop, ParamVector::Constant(1, theta));
  pert.walk_multiplier = 0.0;
  std::vector<double> drift;
  for (std::uint64_t s = 0; s < 20; ++s)
    drift.push_back(
        pif_drift_mean(model, ParamVector::Constant(1, theta), data, prop, eps, pert, 5000, RngStream(s))[0] - theta);
  EXPECT_NEAR(mean(drift), eps * score, 0.25 * std::abs(eps * score));
}

TEST(Ess, IidNormalIsNearLength) {
  const auto e = RngStream(11).engine(0);
  auto eng = e;
  std::vector<double> x(10000);
  for (auto& v : x) v = eng.normal();
  EXPECT_NEAR(ess(x), 10000.0, 1000.0);
}

TEST(Ess, Ar1MatchesClosedForm) {
  auto eng = RngStream(12).engine(0);
  std::vector<double> x(100000);
  double prev = 0.0;
  for (auto& v : x) {
    prev = 0.5 * prev + eng.normal();
    v = prev;
  }
  EXPECT_NEAR(ess(x) / 100000.0, 1.0 / 3.0, 1.0 / 30.0);
}

TEST(Ess, ConstantSeriesIsDegenerate) {
  const std::vector<double> x(50, 0.1);
  const auto r = effective_sample_size(x);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_THROW(ess(std::vector<double>(5, 1.0)), ValidationError);
}

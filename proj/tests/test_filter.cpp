#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pompkit/benchmarks.hpp"
#include "pompkit/filter.hpp"
#include "test_support.hpp"

using namespace pompkit;
using testsupport::flat_model;
using testsupport::mean;
using testsupport::sd;
using testsupport::zeros;

TEST(Pfilter, ConstantDensityGivesZeroLoglik) {
  const auto m = flat_model(10);
  const auto r = pfilter(m, ParamVector::Zero(1), zeros(10), 1, RngStream(1));
  EXPECT_EQ(r.loglik, 0.0);
  EXPECT_EQ(r.n_failures, 0);
}

TEST(Pfilter, Ou2AgreesWithKalman) {
  const auto& data = testsupport::ou2_data();
  const auto model = ou2_model();
  const double exact = ou2_kalman_loglik(ou2_truth(), data);
  std::vector<double> ll;
  for (std::uint64_t s = 0; s < 50; ++s) ll.push_back(pfilter(model, ou2_truth(), data, 1000, RngStream(s)).loglik);
  EXPECT_NEAR(mean(ll), exact, 2.0);
  EXPECT_LT(sd(ll), 1.5);
}

TEST(Pfilter, GompertzAgreesWithLogScaleKalman) {
  const auto& data = testsupport::gompertz_data();
  const auto model = gompertz_model();
  const double exact = gompertz_exact_loglik(gompertz_defaults(), data);
  std::vector<double> ll;
  for (std::uint64_t s = 0; s < 20; ++s)
    ll.push_back(pfilter(model, gompertz_defaults(), data, 1000, RngStream(s)).loglik);
  EXPECT_NEAR(mean(ll), exact, 2.0);
}

TEST(Pfilter, LoglikIsSumOfConditionalTerms) {
  const auto r = pfilter(ou2_model(), ou2_truth(), testsupport::ou2_data(), 200, RngStream(3));
  double s = 0.0;
  for (double c : r.cond_loglik) s += c;
  EXPECT_DOUBLE_EQ(r.loglik, s);
  EXPECT_EQ(r.cond_loglik.size(), 100U);
}

TEST(Pfilter, DeterministicAndIndependentOfWorkers) {
  const auto& data = testsupport::ou2_data();
  FilterOptions one, four;
  four.workers = 4;
  const auto a = pfilter(ou2_model(), ou2_truth(), data, 1500, RngStream(8), one);
  const auto b = pfilter(ou2_model(), ou2_truth(), data, 1500, RngStream(8), one);
  const auto c = pfilter(ou2_model(), ou2_truth(), data, 1500, RngStream(8), four);
  EXPECT_EQ(a.cond_loglik, b.cond_loglik);
  EXPECT_EQ(a.cond_loglik, c.cond_loglik);
  EXPECT_EQ(a.filter_state_means, c.filter_state_means);
}

TEST(Pfilter, ConditionalTermBoundedByLogMaxDensity) {
  // With tau = 1 and two coordinates the density never exceeds (2 pi)^-1.
  const auto r = pfilter(ou2_model(), ou2_truth(), testsupport::ou2_data(), 100, RngStream(2));
  for (double c : r.cond_loglik) EXPECT_LE(c, -std::log(2.0 * std::numbers::pi) + 1e-12);
}

TEST(Pfilter, ZeroWeightFallbackAndFailureLimit) {
  auto m = flat_model(5);
  m.dmeasure = [](std::span<const double>, std::span<const double>, std::span<const double>, double t) {
    return t == 3.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  };
  const auto r = pfilter(m, ParamVector::Zero(1), zeros(5), 10, RngStream(1));
  EXPECT_EQ(r.n_failures, 1);
  EXPECT_DOUBLE_EQ(r.cond_loglik[2], kFailureLogLik);
  FilterOptions strict;
  strict.max_fail = 0;
  EXPECT_THROW(pfilter(m, ParamVector::Zero(1), zeros(5), 10, RngStream(1), strict), FilteringLimitExceeded);
}

TEST(Pfilter, NanDensityIsContractError) {
  auto m = flat_model(3);
  m.dmeasure = [](std::span<const double>, std::span<const double>, std::span<const double>, double) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(pfilter(m, ParamVector::Zero(1), zeros(3), 4, RngStream(1)), ModelContractError);
}

TEST(Pfilter, ValidatesInputs) {
  const auto m = flat_model(3);
  EXPECT_THROW(pfilter(m, ParamVector::Zero(1), zeros(3), 0, RngStream(1)), ValidationError);
  EXPECT_THROW(pfilter(m, ParamVector::Zero(2), zeros(3), 5, RngStream(1)), ValidationError);
  EXPECT_THROW(pfilter(m, ParamVector::Zero(1), zeros(4), 5, RngStream(1)), ValidationError);
  auto bad = zeros(3);
  bad.observations(1, 0) = NAN;
  EXPECT_THROW(pfilter(m, ParamVector::Zero(1), bad, 5, RngStream(1)), ValidationError);
}

TEST(PfilterPerturbed, ZeroScalesReduceToPlainFilter) {
  const auto& data = testsupport::ou2_data();
  auto pert = PerturbationSpec::none(10);
  pert.initial_multiplier = 0.0;
  const auto a = pfilter(ou2_model(), ou2_truth(), data, 300, RngStream(4));
  const auto b = pfilter_perturbed(ou2_model(), ou2_truth(), pert, 1, data, 300, RngStream(4));
  EXPECT_EQ(a.loglik, b.loglik);
  for (Eigen::Index n = 0; n < b.filter_means.rows(); ++n)
    for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(b.filter_means(n, i), ou2_truth()[i], 1e-12);
}

TEST(PfilterPerturbed, RandomWalkVarianceAccumulates) {
  // Flat density: no selection, so the prediction variance grows linearly.
  const std::size_t N = 10;
  const auto m = flat_model(N);
  PerturbationSpec pert;
  pert.sd = {0.5};
  pert.cooling = 0.9;
  pert.initial_multiplier = 2.0;
  const std::size_t iter = 3;
  const double s = 0.5 * std::pow(0.9, 2.0);
  const auto r = pfilter_perturbed(m, ParamVector::Zero(1), pert, iter, zeros(N), 20000, RngStream(6));
  for (std::size_t n = 1; n <= N; ++n) {
    const double expected = s * s * static_cast<double>(n) + 4.0 * s * s;
    EXPECT_NEAR(r.pred_variances(static_cast<Eigen::Index>(n - 1), 0), expected, 0.05 * expected) << n;
  }
}

TEST(PfilterPerturbed, FirstIterationWalkSdMatchesSchedule) {
  PerturbationSpec pert = PerturbationSpec::none(10);
  pert.sd[ou2::alpha_2] = pert.sd[ou2::alpha_3] = 0.02;
  pert.cooling = std::pow(0.011 / 0.02, 1.0 / 19.0);
  EXPECT_DOUBLE_EQ(cooling(pert.cooling, 2.0, 1).walk_scale * 0.02, 0.02);
  EXPECT_NEAR(cooling(pert.cooling, 2.0, 20).walk_scale * 0.02, 0.011, 1e-12);
}

TEST(Cooling, Schedules) {
  const auto c = cooling(0.95, 2.0, 1);
  EXPECT_EQ(c.swarm_scale, 2.0);
  EXPECT_EQ(c.walk_scale, 1.0);
  EXPECT_NEAR(cooling(std::pow(0.1, 0.02), 1.0, 51).walk_scale, 0.1, 1e-12);
  EXPECT_THROW(cooling(0.9, 1.0, 0), ValidationError);
}

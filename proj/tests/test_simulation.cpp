#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "grangerlab/simulation.hpp"
#include "grangerlab/time_series.hpp"
#include "grangerlab/var.hpp"
#include "test_support.hpp"

using namespace grangerlab;

TEST(Simulate, ZeroCoefficientsRecoverNoiseCovariance) {
  GeneratorSpec spec;
  spec.kind = ScheduleKind::Stationary;
  spec.dim = 2;
  spec.order = 1;
  spec.base_coeffs = {Eigen::MatrixXd::Zero(2, 2)};
  spec.noise_cov = Eigen::MatrixXd(2, 2);
  spec.noise_cov << 2.0, 0.5, 0.5, 1.0;
  spec.T = 100000;
  spec.K = 1;
  spec.seed = 7;
  auto series = simulate(spec);
  const auto& x = series.trials[0];
  Eigen::MatrixXd cov = (x.transpose() * x) / double(x.rows());
  // law of large numbers oracle: sample covariance within 5% of truth
  EXPECT_LT((cov - spec.noise_cov).cwiseAbs().maxCoeff() /
                spec.noise_cov.cwiseAbs().maxCoeff(),
            0.05);
}

TEST(Simulate, FixedSeedIsBitIdentical) {
  auto spec = find_scenario("unidir-var1");
  auto a = simulate(spec);
  auto b = simulate(spec);
  ASSERT_EQ(a.n_trials(), b.n_trials());
  for (int k = 0; k < a.n_trials(); ++k) EXPECT_EQ(a.trials[k], b.trials[k]);
}

TEST(Simulate, UnitRootRejected) {
  GeneratorSpec spec;
  spec.kind = ScheduleKind::Stationary;
  spec.dim = 1;
  spec.order = 1;
  spec.base_coeffs = {Eigen::MatrixXd::Constant(1, 1, 1.0)};
  spec.noise_cov = Eigen::MatrixXd::Identity(1, 1);
  spec.T = 100;
  try {
    simulate(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnstableSpec);
  }
}

TEST(Scenarios, CatalogEntriesAreStableAndNamed) {
  auto list = builtin_scenarios();
  ASSERT_GE(list.size(), 5u);
  auto unidir = find_scenario("unidir-var1");
  EXPECT_DOUBLE_EQ(unidir.base_coeffs[0](0, 1), 0.4);
  EXPECT_DOUBLE_EQ(unidir.base_coeffs[0](0, 0), 0.5);
  EXPECT_DOUBLE_EQ(unidir.base_coeffs[0](1, 1), 0.7);
  EXPECT_LT(companion_spectral_radius(unidir.base_coeffs), 1.0);

  auto step = find_scenario("step-onset");
  EXPECT_DOUBLE_EQ(step.vary_value(0), 0.0);
  EXPECT_DOUBLE_EQ(step.vary_value(step.T / 2), 0.5);
  EXPECT_DOUBLE_EQ(step.vary_value(step.T - 1), 0.5);

  auto chain = find_scenario("chain-xwy");
  EXPECT_EQ(chain.dim, 3);
  EXPECT_DOUBLE_EQ(chain.base_coeffs[0](0, 2), 0.0);  // no direct X -> Y
  EXPECT_GT(chain.base_coeffs[0](0, 1), 0.0);         // W -> Y
  EXPECT_GT(chain.base_coeffs[0](1, 2), 0.0);         // X -> W
}

TEST(Scenarios, StationaryScenariosPassScreen) {
  int flagged = 0, total = 0;
  for (const auto& name : {"unidir-var1", "indep-ar1"}) {
    for (int r = 0; r < 50; ++r) {
      auto spec = testsupport::scenario_with(name, 1000 + r, 800);
      auto rep = stationarity_screen(simulate(spec), 4);
      flagged += rep.any_flagged ? 1 : 0;
      ++total;
    }
  }
  EXPECT_LT(double(flagged) / total, 0.05);
}

TEST(Simulate, RefitRecoversCoefficients) {
  // consistency loop closure: refit on a long simulation recovers the truth
  auto spec = testsupport::scenario_with("unidir-var1", 99, 1000000);
  auto series = simulate(spec);
  HistorySpec h;
  h.order = 1;
  auto fit = fit_var(series, {0, 1}, h);
  EXPECT_LT((fit.model.coeffs[0] - spec.base_coeffs[0]).cwiseAbs().maxCoeff(),
            0.02);
  EXPECT_LT((fit.model.noise_cov - spec.noise_cov).cwiseAbs().maxCoeff(), 0.02);
}

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "grangerlab/distributions.hpp"
#include "grangerlab/simulation.hpp"
#include "grangerlab/tv_var.hpp"
#include "test_support.hpp"

using namespace grangerlab;

namespace {

Eigen::VectorXd ols_state_of(const TimeSeriesSet& series,
                             const std::vector<int>& channels,
                             const HistorySpec& h) {
  auto fit = fit_var(series, channels, h);
  return detail::state_from_coeffs(fit.model.coeffs);
}

}  // namespace

TEST(TvWindow, DegenerateWindowEqualsStationaryFit) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 1, 1200));
  HistorySpec h;
  auto traj = tv_var_window(series, {0, 1}, h, series.n_samples(),
                            series.n_samples());
  ASSERT_EQ(traj.states.size(), 1u);
  // same code path, same rows: bit-for-bit equality
  EXPECT_EQ(traj.states[0], ols_state_of(series, {0, 1}, h));
  EXPECT_EQ(traj.times[0], series.n_samples() / 2);
}

TEST(TvWindow, TracksStepCoupling) {
  int ok = 0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    auto spec = testsupport::scenario_with("step-onset", 200 + r, 4000, 10);
    auto series = simulate(spec);
    HistorySpec h;
    auto traj = tv_var_window(series, {0, 1}, h, 200, 50);
    bool within = true;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const int t = traj.times[i];
      if (std::abs(t - spec.T / 2) <= 200) continue;  // near the change point
      const double truth = spec.vary_value(t);
      if (std::abs(traj.coeff(i, 0, 1, 0) - truth) > 0.1) within = false;
    }
    ok += within ? 1 : 0;
  }
  EXPECT_GE(ok, 9);
}

TEST(TvWindow, RejectsShortWindows) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 2, 500));
  HistorySpec h;
  try {
    tv_var_window(series, {0, 1}, h, 5, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WindowTooShort);
  }
}

TEST(TvKalman, SchackUpdateMatchesPrintedRule) {
  // univariate, one usable step: prior state 0 and prior covariance ~0 make
  // the innovation equal the observation, so R_1 = (1-UC) R_0 + UC e^2
  TimeSeriesSet s;
  Eigen::MatrixXd trial(2, 1);
  trial << 1.0, 2.0;  // e at the single step = 2
  s.trials.push_back(trial);
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  cfg.q_variant = QVariant::Zero;
  cfg.uc = 0.1;
  cfg.init_state_cov = 1e-12 * Eigen::MatrixXd::Identity(1, 1);
  auto traj = tv_var_kalman(s, {0}, h, cfg);
  ASSERT_EQ(traj.obs_noise.size(), 1u);
  EXPECT_NEAR(traj.obs_noise[0](0, 0), 0.9 * 1.0 + 0.1 * 4.0, 1e-9);
}

TEST(TvKalman, ConvergesToOlsOnStationaryData) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 3, 5000));
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.01;
  auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
  Eigen::VectorXd ols = ols_state_of(series, {0, 1}, h);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  const std::size_t q3 = traj.states.size() * 3 / 4;
  for (std::size_t i = q3; i < traj.states.size(); ++i) mean += traj.states[i];
  mean /= double(traj.states.size() - q3);
  EXPECT_LT((mean - ols).cwiseAbs().maxCoeff(), 0.05);
}

TEST(TvKalman, TracksStepOnset) {
  int reached = 0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    auto spec = testsupport::scenario_with("step-onset", 300 + r);
    auto series = simulate(spec);
    HistorySpec h;
    KalmanConfig cfg;
    cfg.r_variant = RVariant::Schack;
    cfg.q_variant = QVariant::Isaksson;
    cfg.uc = 0.02;
    auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
    const int onset = spec.T / 2;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      if (traj.times[i] >= onset && traj.times[i] < onset + 500 &&
          traj.coeff(i, 0, 1, 0) >= 0.4) {
        ++reached;
        break;
      }
    }
  }
  EXPECT_GE(reached, 27);  // >= 90%
}

TEST(TvKalman, RlsEquivalenceWithFlatPrior) {
  // Q = 0, R = I, huge initial covariance: the filter endpoint is ridge
  // regression with a vanishing penalty, i.e. OLS
  auto series = simulate(testsupport::scenario_with("unidir-var1", 4, 3000));
  HistorySpec h;
  KalmanConfig cfg;
  cfg.q_variant = QVariant::Zero;
  cfg.r_variant = RVariant::Constant1;
  cfg.init_state_cov = 1e6 * Eigen::MatrixXd::Identity(4, 4);
  auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
  EXPECT_LT((traj.states.back() - ols_state_of(series, {0, 1}, h))
                .cwiseAbs()
                .maxCoeff(),
            1e-3);
}

TEST(TvKalman, VariantTrialContractsEnforced) {
  auto multi = simulate(testsupport::scenario_with("unidir-var1", 5, 400, 3));
  auto single = simulate(testsupport::scenario_with("unidir-var1", 5, 400, 1));
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  try {
    tv_var_kalman(multi, {0, 1}, h, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VariantTrialMismatch);
  }
  cfg.r_variant = RVariant::MildeMultitrial;
  try {
    tv_var_kalman(single, {0, 1}, h, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VariantTrialMismatch);
  }
}

TEST(TvKalman, MildeMultitrialTracksAcrossTrials) {
  auto spec = testsupport::scenario_with("step-onset", 6, 2000, 8);
  auto series = simulate(spec);
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::MildeMultitrial;
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.02;
  auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
  EXPECT_EQ(traj.innovations.size(), 8u);
  double post_mean = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (traj.times[i] >= spec.T / 2 + 500) {
      post_mean += traj.coeff(i, 0, 1, 0);
      ++n;
    }
  }
  post_mean /= double(n);
  EXPECT_NEAR(post_mean, 0.5, 0.1);
}

TEST(TvKalman, ExperimentalVariantsStayFinite) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 7, 2000));
  HistorySpec h;
  for (auto rv : {RVariant::Constant1MinusUc, RVariant::Jazwinski,
                  RVariant::Penny}) {
    KalmanConfig cfg;
    cfg.r_variant = rv;
    cfg.q_variant = QVariant::Isaksson;
    cfg.uc = 0.02;
    auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
    for (const auto& s : traj.states) ASSERT_TRUE(s.allFinite());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    const std::size_t q3 = traj.states.size() * 3 / 4;
    for (std::size_t i = q3; i < traj.states.size(); ++i)
      mean += traj.states[i];
    mean /= double(traj.states.size() - q3);
    EXPECT_NEAR(mean(0), 0.5, 0.2) << r_variant_name(rv);
  }
  // Q variants
  for (auto qv : {QVariant::AkayHaykin, QVariant::JazwinskiPenny}) {
    KalmanConfig cfg;
    cfg.r_variant = RVariant::Schack;
    cfg.q_variant = qv;
    cfg.uc = 0.02;
    auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
    for (const auto& s : traj.states) ASSERT_TRUE(s.allFinite());
  }
}

TEST(TvKalman, CovarianceBlowupGuard) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 8, 800));
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::FixedR;
  cfg.r_fixed = 1e8 * Eigen::MatrixXd::Identity(2, 2);  // observations useless
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.9;  // large process noise accumulates
  cfg.cov_trace_bound = 10.0;
  try {
    tv_var_kalman(series, {0, 1}, h, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CovarianceBlowup);
  }
}

TEST(TvKalman, SmoothedTrajectoryIsLessNoisy) {
  auto spec = testsupport::scenario_with("sinusoidal-coupling", 9, 3000, 1);
  auto series = simulate(spec);
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.02;
  auto filtered = tv_var_kalman(series, {0, 1}, h, cfg, false);
  auto smoothed = tv_var_kalman(series, {0, 1}, h, cfg, true);
  auto rmse = [&](const TvVarTrajectory& traj) {
    double se = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      se += std::pow(traj.coeff(i, 0, 1, 0) - spec.vary_value(traj.times[i]), 2);
    return std::sqrt(se / double(traj.times.size()));
  };
  EXPECT_LT(rmse(smoothed), rmse(filtered));
}

TEST(TvAdaptive, RlsStaysNearZeroOnWhiteNoise) {
  double acc = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    GeneratorSpec s;
    s.dim = 2;
    s.order = 1;
    s.base_coeffs = {Eigen::MatrixXd::Zero(2, 2)};
    s.noise_cov = Eigen::MatrixXd::Identity(2, 2);
    s.T = 3000;
    s.seed = 400 + r;
    auto series = simulate(s);
    HistorySpec h;
    auto traj = tv_var_adaptive(series, {0, 1}, h, TvMethod::Rls, 0.005);
    double mean_abs = 0.0;
    long n = 0;
    for (std::size_t i = traj.states.size() / 2; i < traj.states.size(); ++i) {
      mean_abs += traj.states[i].cwiseAbs().mean();
      ++n;
    }
    acc += mean_abs / double(n);
  }
  EXPECT_LT(acc / reps, 0.05);
}

TEST(TvAdaptive, RlsRecoversStationaryCoefficient) {
  double acc = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    auto series =
        simulate(testsupport::scenario_with("unidir-var1", 500 + r, 3000));
    HistorySpec h;
    auto traj = tv_var_adaptive(series, {0, 1}, h, TvMethod::Rls, 0.02);
    double mean = 0.0;
    long n = 0;
    for (std::size_t i = traj.states.size() / 2; i < traj.states.size(); ++i) {
      mean += traj.coeff(i, 0, 0, 0);
      ++n;
    }
    acc += mean / double(n);
  }
  EXPECT_NEAR(acc / reps, 0.5, 0.05);
}

TEST(TvAdaptive, LmsTracksSlowly) {
  auto spec = testsupport::scenario_with("step-onset", 10, 4000);
  auto series = simulate(spec);
  HistorySpec h;
  auto traj = tv_var_adaptive(series, {0, 1}, h, TvMethod::Lms, 0.01);
  double post = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    if (traj.times[i] >= spec.T / 2 + 1000) {
      post += traj.coeff(i, 0, 1, 0);
      ++n;
    }
  EXPECT_NEAR(post / double(n), 0.5, 0.2);
  EXPECT_TRUE(traj.state_cov.empty());
}

TEST(TvAdaptive, LargeUcDivergesOrFlags) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 11, 2000));
  HistorySpec h;
  bool diverged = false, flagged = false;
  try {
    auto traj = tv_var_adaptive(series, {0, 1}, h, TvMethod::Lms, 0.9);
    flagged = traj.divergence_flagged;
  } catch (const Error& e) {
    diverged = e.code() == ErrorCode::Divergence;
  }
  EXPECT_TRUE(diverged || flagged);
}

TEST(KalmanEm, LikelihoodMonotoneOverFiftyIterations) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 12, 1000));
  HistorySpec h;
  auto em = kalman_em(series, {0, 1}, h, 50);
  ASSERT_EQ(em.log_likelihood.size(), 50u);
  for (std::size_t i = 1; i < em.log_likelihood.size(); ++i)
    EXPECT_GE(em.log_likelihood[i],
              em.log_likelihood[i - 1] -
                  1e-8 * (1.0 + std::abs(em.log_likelihood[i - 1])));
}

TEST(KalmanEm, ConstantCoefficientsShrinkQ) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 13, 2000));
  HistorySpec h;
  auto em = kalman_em(series, {0, 1}, h, 50);
  EXPECT_LT(em.config.q_fixed.trace(), 0.01 * em.config.r_fixed.trace());
  Eigen::VectorXd ols = ols_state_of(series, {0, 1}, h);
  for (const auto& s : em.trajectory.states)
    EXPECT_LT((s - ols).cwiseAbs().maxCoeff(), 0.05);
}

TEST(KalmanEm, RecoverySinusoidalTrajectory) {
  auto spec = testsupport::scenario_with("sinusoidal-coupling", 14, 4000, 1);
  auto series = simulate(spec);
  HistorySpec h;
  auto em = kalman_em(series, {0, 1}, h, 30);
  double se = 0.0;
  for (std::size_t i = 0; i < em.trajectory.times.size(); ++i)
    se += std::pow(em.trajectory.coeff(i, 0, 1, 0) -
                       spec.vary_value(em.trajectory.times[i]),
                   2);
  EXPECT_LT(std::sqrt(se / double(em.trajectory.times.size())), 0.1);
}

TEST(KalmanEm, MultiTrialAndFreeTransitionStayMonotone) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 15, 400, 4));
  HistorySpec h;
  auto em = kalman_em(series, {0, 1}, h, 10);
  for (std::size_t i = 1; i < em.log_likelihood.size(); ++i)
    EXPECT_GE(em.log_likelihood[i],
              em.log_likelihood[i - 1] -
                  1e-8 * (1.0 + std::abs(em.log_likelihood[i - 1])));
  auto free_a = kalman_em(simulate(testsupport::scenario_with("unidir-var1",
                                                              16, 800)),
                          {0, 1}, h, 10, false);
  for (std::size_t i = 1; i < free_a.log_likelihood.size(); ++i)
    EXPECT_GE(free_a.log_likelihood[i],
              free_a.log_likelihood[i - 1] -
                  1e-8 * (1.0 + std::abs(free_a.log_likelihood[i - 1])));
  ASSERT_TRUE(free_a.config.A.allFinite());
}

TEST(TvBasis, ConstantBasisReproducesStationaryFit) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 17, 1500));
  HistorySpec h;
  auto traj = tv_var_basis(series, {0, 1}, h, 1, BasisKind::Spline);
  Eigen::VectorXd ols = ols_state_of(series, {0, 1}, h);
  for (const auto& s : traj.states)
    EXPECT_LT((s - ols).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TvBasis, SplineRecoversSinusoid) {
  std::vector<double> rmse;
  for (int r = 0; r < 10; ++r) {
    auto spec =
        testsupport::scenario_with("sinusoidal-coupling", 600 + r, 2000, 20);
    auto series = simulate(spec);
    HistorySpec h;
    auto traj = tv_var_basis(series, {0, 1}, h, 8, BasisKind::Spline);
    double se = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      se += std::pow(traj.coeff(i, 0, 1, 0) - spec.vary_value(traj.times[i]), 2);
    rmse.push_back(std::sqrt(se / double(traj.times.size())));
  }
  std::sort(rmse.begin(), rmse.end());
  EXPECT_LT(rmse[5], 0.08);  // median
}

TEST(TvBasis, HaarBasisCapturesStepChange) {
  auto spec = testsupport::scenario_with("step-onset", 18, 2000, 10);
  auto series = simulate(spec);
  HistorySpec h;
  auto traj = tv_var_basis(series, {0, 1}, h, 8, BasisKind::WaveletLike);
  double se = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (std::abs(traj.times[i] - spec.T / 2) <= 50) continue;
    se += std::pow(traj.coeff(i, 0, 1, 0) - spec.vary_value(traj.times[i]), 2);
    ++n;
  }
  EXPECT_LT(std::sqrt(se / double(n)), 0.1);
}

TEST(TvBasis, OverparameterizedDesignRejected) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 19, 60));
  HistorySpec h;
  try {
    tv_var_basis(series, {0, 1}, h, 40, BasisKind::Spline);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularExpandedDesign);
  }
}

TEST(TvCausality, ZeroCausalBlockGivesZeroWald) {
  TvVarTrajectory traj;
  traj.method = TvMethod::Window;
  traj.dim = 2;
  traj.order = 1;
  traj.times = {10, 11};
  Eigen::VectorXd state(4);
  state << 0.5, 0.0, 0.0, 0.7;  // causal entry (0 <- 1) is zero
  traj.states = {state, state};
  traj.state_cov.assign(2, Eigen::MatrixXd::Identity(4, 4));
  auto res = tv_causality(traj, TvStat::Wald, 1, 0);
  EXPECT_DOUBLE_EQ(res.values(0), 0.0);
  EXPECT_DOUBLE_EQ(res.p_values(0), 1.0);
}

TEST(TvCausality, WaldCrossesAfterOnsetOnly) {
  const double q99 = chi2_quantile(0.99, 1.0);
  int crossed = 0;
  long pre_exceed = 0, pre_total = 0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    auto spec = testsupport::scenario_with("step-onset", 700 + r);
    auto series = simulate(spec);
    HistorySpec h;
    KalmanConfig cfg;
    cfg.r_variant = RVariant::Schack;
    cfg.q_variant = QVariant::Isaksson;
    cfg.uc = 0.02;
    auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
    auto wald = tv_causality(traj, TvStat::Wald, 1, 0);
    bool hit = false;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const int t = traj.times[i];
      if (t >= spec.T / 2 && t < spec.T / 2 + 500 && wald.values(i) > q99)
        hit = true;
      if (t >= 200 && t < spec.T / 2) {
        ++pre_total;
        pre_exceed += wald.values(i) > q99 ? 1 : 0;
      }
    }
    crossed += hit ? 1 : 0;
  }
  EXPECT_GE(crossed, 27);  // >= 90% of runs
  EXPECT_LE(double(pre_exceed) / double(pre_total), 0.10);
}

TEST(TvCausality, TimeFrequencyDtfFollowsCouplingSchedule) {
  auto spec = testsupport::scenario_with("sinusoidal-coupling", 20, 2000, 20);
  auto series = simulate(spec);
  HistorySpec h;
  auto traj = tv_var_basis(series, {0, 1}, h, 8, BasisKind::Spline);
  auto map = tv_causality(traj, TvStat::Dtf, 1, 0, 32);
  ASSERT_EQ(map.time_freq_values.rows(),
            static_cast<long>(traj.times.size()));
  // band-averaged DTF profile vs |true coefficient schedule|
  Eigen::VectorXd profile = map.time_freq_values.rowwise().mean();
  Eigen::VectorXd truth(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    truth(i) = std::abs(spec.vary_value(traj.times[i]));
  const auto center = [](Eigen::VectorXd v) {
    return (v.array() - v.mean()).matrix().eval();
  };
  Eigen::VectorXd a = center(profile), b = center(truth);
  const double r = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
  EXPECT_GT(r, 0.8);
}

TEST(TvCausality, SpectralGgcMapOnKalmanTrajectory) {
  auto spec = testsupport::scenario_with("step-onset", 21);
  auto series = simulate(spec);
  HistorySpec h;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.02;
  auto traj = tv_var_kalman(series, {0, 1}, h, cfg);
  auto map = tv_causality(traj, TvStat::SpectralGgc, 1, 0, 16);
  // pre-onset band mean should be clearly below post-onset band mean
  double pre = 0.0, post = 0.0;
  long n_pre = 0, n_post = 0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double band = map.time_freq_values.row(i).mean();
    if (traj.times[i] < spec.T / 2 - 100) {
      pre += band;
      ++n_pre;
    } else if (traj.times[i] > spec.T / 2 + 500) {
      post += band;
      ++n_post;
    }
  }
  EXPECT_LT(pre / double(n_pre), 0.25 * post / double(n_post));
}

TEST(TvCausality, MissingStateCovarianceRejected) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 22, 1000));
  HistorySpec h;
  auto traj = tv_var_adaptive(series, {0, 1}, h, TvMethod::Lms, 0.01);
  try {
    tv_causality(traj, TvStat::Wald, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingStateCov);
  }
}

TEST(Trajectory, DimensionsConformAcrossMethods) {
  auto series = simulate(testsupport::scenario_with("unidir-var1", 23, 900));
  HistorySpec h;
  h.order = 2;
  KalmanConfig cfg;
  cfg.r_variant = RVariant::Schack;
  cfg.q_variant = QVariant::Isaksson;
  cfg.uc = 0.02;
  std::vector<TvVarTrajectory> trajs;
  trajs.push_back(tv_var_window(series, {0, 1}, h, 300, 100));
  trajs.push_back(tv_var_kalman(series, {0, 1}, h, cfg));
  trajs.push_back(tv_var_adaptive(series, {0, 1}, h, TvMethod::Rls, 0.02));
  trajs.push_back(tv_var_basis(series, {0, 1}, h, 4, BasisKind::Spline));
  for (const auto& traj : trajs) {
    EXPECT_EQ(traj.state_dim(), 2 * 2 * 2);
    ASSERT_FALSE(traj.states.empty());
    for (const auto& s : traj.states) EXPECT_EQ(s.size(), 8);
    EXPECT_EQ(traj.times.size(), traj.states.size());
  }
  // non-window methods produce one state per usable sample
  for (std::size_t i = 1; i < trajs.size(); ++i)
    EXPECT_EQ(static_cast<int>(trajs[i].states.size()),
              series.n_samples() - h.first_usable());
}

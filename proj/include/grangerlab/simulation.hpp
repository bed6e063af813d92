#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "grangerlab/errors.hpp"
#include "grangerlab/rng.hpp"
#include "grangerlab/time_series.hpp"

namespace grangerlab {

enum class ScheduleKind {
  Stationary,
  StepCoupling,
  SinusoidalCoupling,
  ChainTrivariate,  // stationary chain; kept as its own kind for the catalog
};

inline const char* schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Stationary: return "stationary-var";
    case ScheduleKind::StepCoupling: return "step-coupling";
    case ScheduleKind::SinusoidalCoupling: return "sinusoidal-coupling";
    case ScheduleKind::ChainTrivariate: return "chain-trivariate";
  }
  return "unknown";
}

/// Generative VAR specification with an optional single time-varying
/// coefficient entry (target row, source column, lag) modulated by `kind`.
struct GeneratorSpec {
  std::string name;
  ScheduleKind kind = ScheduleKind::Stationary;
  int dim = 2;
  int order = 1;
  std::vector<Eigen::MatrixXd> base_coeffs;  // order matrices, dim x dim
  int vary_target = 0;
  int vary_source = 1;
  int vary_lag = 0;           // 0-based lag index of the varying entry
  double vary_low = 0.0;      // step: value before onset; sinus: unused
  double vary_high = 0.0;     // step: value after onset; sinus: amplitude
  Eigen::MatrixXd noise_cov;
  int T = 1000;
  int K = 1;
  std::uint64_t seed = 1;
  int burn_in = 500;
  std::vector<std::string> channel_names;

  /// Value of the varying entry at output time t (0-based).
  double vary_value(int t) const {
    switch (kind) {
      case ScheduleKind::StepCoupling:
        return t < T / 2 ? vary_low : vary_high;
      case ScheduleKind::SinusoidalCoupling:
        return vary_high * std::sin(2.0 * std::numbers::pi * double(t) / double(T));
      default:
        return base_coeffs[vary_lag](vary_target, vary_source);
    }
  }

  bool time_varying() const {
    return kind == ScheduleKind::StepCoupling ||
           kind == ScheduleKind::SinusoidalCoupling;
  }

  std::vector<Eigen::MatrixXd> coeffs_at(int t) const {
    std::vector<Eigen::MatrixXd> c = base_coeffs;
    if (time_varying()) c[vary_lag](vary_target, vary_source) = vary_value(t);
    return c;
  }
};

/// Spectral radius of the VAR companion matrix; < 1 means stable.
inline double companion_spectral_radius(const std::vector<Eigen::MatrixXd>& coeffs) {
  const int p = static_cast<int>(coeffs.size());
  const int d = static_cast<int>(coeffs[0].rows());
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(d * p, d * p);
  for (int j = 0; j < p; ++j) companion.block(0, j * d, d, d) = coeffs[j];
  if (p > 1)
    companion.block(d, 0, d * (p - 1), d * (p - 1)) =
        Eigen::MatrixXd::Identity(d * (p - 1), d * (p - 1));
  return companion.eigenvalues().cwiseAbs().maxCoeff();
}

/// Draw from the spec: Gaussian innovations, burn-in discarded,
/// deterministic for a fixed seed (independent per-trial substreams).
inline TimeSeriesSet simulate(const GeneratorSpec& spec) {
  const int d = spec.dim;
  const int p = spec.order;
  if (static_cast<int>(spec.base_coeffs.size()) != p)
    throw Error(ErrorCode::BadConfig, "coefficient count does not match order");
  if (spec.T < 2 || spec.K < 1)
    throw Error(ErrorCode::BadConfig, "need T >= 2 and K >= 1");
  // Stability must hold pointwise over the whole schedule.
  if (spec.time_varying()) {
    for (int t = 0; t < spec.T; ++t) {
      if (companion_spectral_radius(spec.coeffs_at(t)) >= 1.0)
        throw Error(ErrorCode::UnstableSpec,
                    "companion spectral radius >= 1 at t=" + std::to_string(t),
                    {{"time", double(t)}});
    }
  } else if (companion_spectral_radius(spec.base_coeffs) >= 1.0) {
    throw Error(ErrorCode::UnstableSpec, "companion spectral radius >= 1");
  }

  Eigen::LLT<Eigen::MatrixXd> llt(spec.noise_cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::BadConfig, "noise covariance is not positive definite");
  Eigen::MatrixXd chol = llt.matrixL();

  TimeSeriesSet out;
  out.channel_names = spec.channel_names;
  out.trials.reserve(spec.K);
  const int total = spec.burn_in + spec.T;
  for (int k = 0; k < spec.K; ++k) {
    auto engine = make_stream(spec.seed, "trial", static_cast<std::uint64_t>(k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(total, d);
    Eigen::VectorXd z(d);
    for (int t = 0; t < total; ++t) {
      for (int c = 0; c < d; ++c) z(c) = gauss(engine);
      Eigen::VectorXd value = chol * z;
      const int sched_t = std::max(0, t - spec.burn_in);
      for (int j = 0; j < p; ++j) {
        const int lag_t = t - j - 1;
        if (lag_t < 0) continue;
        if (spec.time_varying() && j == spec.vary_lag) {
          Eigen::MatrixXd c = spec.base_coeffs[j];
          c(spec.vary_target, spec.vary_source) = spec.vary_value(sched_t);
          value += c * x.row(lag_t).transpose();
        } else {
          value += spec.base_coeffs[j] * x.row(lag_t).transpose();
        }
      }
      x.row(t) = value.transpose();
    }
    out.trials.push_back(x.bottomRows(spec.T));
  }
  return out;
}

/// Named, versioned scenario catalog shared by the test suites and the CLI.
inline std::vector<GeneratorSpec> builtin_scenarios() {
  std::vector<GeneratorSpec> list;

  {
    GeneratorSpec s;
    s.name = "unidir-var1";
    s.kind = ScheduleKind::Stationary;
    s.dim = 2;
    s.order = 1;
    Eigen::MatrixXd a(2, 2);
    a << 0.5, 0.4, 0.0, 0.7;  // Y_t = .5 Y + .4 X, X_t = .7 X
    s.base_coeffs = {a};
    s.noise_cov = Eigen::MatrixXd::Identity(2, 2);
    s.T = 2000;
    s.K = 1;
    s.seed = 12345;
    s.channel_names = {"Y", "X"};
    list.push_back(s);
  }
  {
    GeneratorSpec s;
    s.name = "indep-ar1";
    s.kind = ScheduleKind::Stationary;
    s.dim = 2;
    s.order = 1;
    Eigen::MatrixXd a(2, 2);
    a << 0.5, 0.0, 0.0, 0.7;
    s.base_coeffs = {a};
    s.noise_cov = Eigen::MatrixXd::Identity(2, 2);
    s.T = 500;
    s.K = 1;
    s.seed = 23456;
    s.channel_names = {"Y", "X"};
    list.push_back(s);
  }
  {
    GeneratorSpec s;
    s.name = "step-onset";
    s.kind = ScheduleKind::StepCoupling;
    s.dim = 2;
    s.order = 1;
    Eigen::MatrixXd a(2, 2);
    a << 0.5, 0.0, 0.0, 0.7;
    s.base_coeffs = {a};
    s.vary_target = 0;
    s.vary_source = 1;
    s.vary_lag = 0;
    s.vary_low = 0.0;
    s.vary_high = 0.5;
    s.noise_cov = Eigen::MatrixXd::Identity(2, 2);
    s.T = 3000;
    s.K = 1;
    s.seed = 34567;
    s.channel_names = {"Y", "X"};
    list.push_back(s);
  }
  {
    GeneratorSpec s;
    s.name = "sinusoidal-coupling";
    s.kind = ScheduleKind::SinusoidalCoupling;
    s.dim = 2;
    s.order = 1;
    Eigen::MatrixXd a(2, 2);
    a << 0.5, 0.0, 0.0, 0.7;
    s.base_coeffs = {a};
    s.vary_target = 0;
    s.vary_source = 1;
    s.vary_lag = 0;
    s.vary_high = 0.4;
    s.noise_cov = Eigen::MatrixXd::Identity(2, 2);
    s.T = 2000;
    s.K = 20;
    s.seed = 45678;
    s.channel_names = {"Y", "X"};
    list.push_back(s);
  }
  {
    GeneratorSpec s;
    s.name = "chain-xwy";
    s.kind = ScheduleKind::ChainTrivariate;
    s.dim = 3;
    s.order = 1;
    Eigen::MatrixXd a(3, 3);
    // X drives W drives Y; no direct X -> Y entry.
    a << 0.5, 0.4, 0.0,
         0.0, 0.5, 0.4,
         0.0, 0.0, 0.7;
    s.base_coeffs = {a};
    s.noise_cov = Eigen::MatrixXd::Identity(3, 3);
    s.T = 2000;
    s.K = 1;
    s.seed = 56789;
    s.channel_names = {"Y", "W", "X"};
    list.push_back(s);
  }
  return list;
}

inline GeneratorSpec find_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios())
    if (s.name == name) return s;
  throw Error(ErrorCode::BadConfig, "unknown scenario: " + name);
}

}  // namespace grangerlab

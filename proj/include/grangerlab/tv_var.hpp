#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "grangerlab/distributions.hpp"
#include "grangerlab/errors.hpp"
#include "grangerlab/spectral.hpp"
#include "grangerlab/var.hpp"

namespace grangerlab {

enum class TvMethod { Window, Lms, Rls, Kalman, Basis };

inline const char* tv_method_name(TvMethod m) {
  switch (m) {
    case TvMethod::Window: return "window";
    case TvMethod::Lms: return "lms";
    case TvMethod::Rls: return "rls";
    case TvMethod::Kalman: return "kalman";
    case TvMethod::Basis: return "basis";
  }
  return "unknown";
}

/// Per-time coefficient trajectory. states[i] stacks the coefficient vector
/// equation-major: entry l*d*p + j*d + m is the lag-(j+1) influence of
/// channel m on channel l at times[i] (the same layout the stationary fit
/// uses, so degenerate configurations agree exactly).
struct TvVarTrajectory {
  std::vector<int> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::MatrixXd> state_cov;    // empty when unavailable (LMS)
  std::vector<Eigen::MatrixXd> noise_cov;    // d x d per time; may be empty
  std::vector<Eigen::MatrixXd> obs_noise;    // Kalman R_t sequence, diagnostics
  std::vector<Eigen::MatrixXd> innovations;  // per trial: n_times x d
  TvMethod method = TvMethod::Window;
  int dim = 0;
  int order = 0;
  HistorySpec history;
  bool divergence_flagged = false;

  int state_dim() const { return dim * dim * order; }

  Eigen::MatrixXd coeff_matrix(std::size_t idx, int lag) const {
    Eigen::MatrixXd c(dim, dim);
    for (int l = 0; l < dim; ++l)
      for (int m = 0; m < dim; ++m)
        c(l, m) = states[idx](l * dim * order + lag * dim + m);
    return c;
  }

  double coeff(std::size_t idx, int target, int source, int lag) const {
    return states[idx](target * dim * order + lag * dim + source);
  }
};

namespace detail {

inline Eigen::VectorXd state_from_coeffs(const std::vector<Eigen::MatrixXd>& coeffs) {
  const int p = static_cast<int>(coeffs.size());
  const int d = static_cast<int>(coeffs[0].rows());
  Eigen::VectorXd s(d * d * p);
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p; ++j)
      for (int m = 0; m < d; ++m) s(l * d * p + j * d + m) = coeffs[j](l, m);
  return s;
}

inline std::vector<Eigen::MatrixXd> coeffs_from_state(const Eigen::VectorXd& s,
                                                      int d, int p) {
  std::vector<Eigen::MatrixXd> coeffs(p, Eigen::MatrixXd(d, d));
  for (int l = 0; l < d; ++l)
    for (int j = 0; j < p; ++j)
      for (int m = 0; m < d; ++m) coeffs[j](l, m) = s(l * d * p + j * d + m);
  return coeffs;
}

/// Per-trial lagged regressor rows c_t (length d*p) and responses z_t.
struct TrialRows {
  Eigen::MatrixXd c;  // n_times x (d*p)
  Eigen::MatrixXd z;  // n_times x d
};

inline TrialRows trial_rows(const Eigen::MatrixXd& trial,
                            const std::vector<int>& channels,
                            const HistorySpec& history) {
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  const int T = static_cast<int>(trial.rows());
  const int t0 = history.first_usable();
  TrialRows out;
  out.c.resize(T - t0, d * p);
  out.z.resize(T - t0, d);
  for (int t = t0; t < T; ++t) {
    const int r = t - t0;
    for (int m = 0; m < d; ++m) out.z(r, m) = trial(t, channels[m]);
    for (int j = 0; j < p; ++j)
      for (int m = 0; m < d; ++m)
        out.c(r, j * d + m) = trial(t - history.lag_offset(j), channels[m]);
  }
  return out;
}

/// dense observation matrix C_t = I_d (x) c_t' applied implicitly
inline Eigen::VectorXd observe(const Eigen::VectorXd& state,
                               const Eigen::VectorXd& c, int d) {
  const int dp = static_cast<int>(c.size());
  Eigen::VectorXd z(d);
  for (int l = 0; l < d; ++l) z(l) = c.dot(state.segment(l * dp, dp));
  return z;
}

inline Eigen::MatrixXd cpc(const Eigen::MatrixXd& P, const Eigen::VectorXd& c,
                           int d) {
  const int dp = static_cast<int>(c.size());
  Eigen::MatrixXd out(d, d);
  for (int l = 0; l < d; ++l) {
    Eigen::VectorXd pc = P.block(l * dp, 0, dp, P.cols()).transpose() * c;
    for (int m = 0; m < d; ++m) out(m, l) = c.dot(pc.segment(m * dp, dp));
  }
  return out;
}

inline Eigen::MatrixXd pct(const Eigen::MatrixXd& P, const Eigen::VectorXd& c,
                           int d) {
  const int dp = static_cast<int>(c.size());
  Eigen::MatrixXd out(P.rows(), d);
  for (int l = 0; l < d; ++l) out.col(l) = P.middleCols(l * dp, dp) * c;
  return out;
}

}  // namespace detail

/// Sliding-window VAR: a stationary fit in each window, pooled over trials,
/// timestamped at the window centre.
inline TvVarTrajectory tv_var_window(const TimeSeriesSet& series,
                                     const std::vector<int>& channels,
                                     const HistorySpec& history,
                                     int window_len, int step) {
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  const int T = series.n_samples();
  if (window_len < 3 * d * p)
    throw Error(ErrorCode::WindowTooShort,
                "window_len must be at least 3*d*p samples");
  if (step < 1) throw Error(ErrorCode::BadConfig, "step must be >= 1");
  TvVarTrajectory traj;
  traj.method = TvMethod::Window;
  traj.dim = d;
  traj.order = p;
  traj.history = history;
  for (int start = 0; start + window_len <= T; start += step) {
    TimeSeriesSet window;
    window.sampling_rate = series.sampling_rate;
    for (const auto& trial : series.trials)
      window.trials.push_back(trial.middleRows(start, window_len));
    auto fit = fit_var(window, channels, history);
    traj.times.push_back(start + window_len / 2);
    traj.states.push_back(detail::state_from_coeffs(fit.model.coeffs));
    // full multivariate OLS covariance Sigma (x) (X'X)^-1
    auto rows = detail::build_rows(window, channels, history);
    Eigen::MatrixXd gram_inv =
        (rows.X.transpose() * rows.X).ldlt().solve(
            Eigen::MatrixXd::Identity(d * p, d * p));
    Eigen::MatrixXd cov(d * d * p, d * d * p);
    for (int l = 0; l < d; ++l)
      for (int m = 0; m < d; ++m)
        cov.block(l * d * p, m * d * p, d * p, d * p) =
            fit.model.noise_cov(l, m) * gram_inv;
    traj.state_cov.push_back(cov);
    traj.noise_cov.push_back(fit.model.noise_cov);
  }
  if (traj.times.empty())
    throw Error(ErrorCode::WindowTooShort, "no window fits inside the series");
  // one-step innovations at the stored states
  const int n_times = static_cast<int>(traj.times.size());
  for (const auto& trial : series.trials) {
    auto rows = detail::trial_rows(trial, channels, history);
    Eigen::MatrixXd innov(n_times, d);
    for (int i = 0; i < n_times; ++i) {
      const int r = traj.times[i] - history.first_usable();
      if (r < 0 || r >= rows.c.rows()) {
        innov.row(i).setZero();
        continue;
      }
      Eigen::VectorXd pred = detail::observe(traj.states[i], rows.c.row(r), d);
      innov.row(i) = rows.z.row(r) - pred.transpose();
    }
    traj.innovations.push_back(innov);
  }
  return traj;
}

enum class RVariant {
  Schack,            // R_t = (1-UC) R_{t-1} + UC e e'
  MildeMultitrial,   // pooled over trials: R = (1-UC) R + UC e'e/(K-1)
  Constant1,         // R = I
  Constant1MinusUc,  // R = (1-UC) I
  Jazwinski,         // experimental transcription, see Q/R notes
  Penny,             // as Jazwinski with a one-step lag
  Zero,              // R = 0
  FixedR,            // user/EM supplied matrix
};

enum class QVariant {
  AkayHaykin,      // Q_t = UC * (posterior state covariance); experimental
  Isaksson,        // Q_t = UC^2 * I
  JazwinskiPenny,  // data-driven L_t rule; experimental
  Zero,            // Q = 0
  FixedQ,          // user/EM supplied matrix
};

inline const char* r_variant_name(RVariant v) {
  switch (v) {
    case RVariant::Schack: return "schack";
    case RVariant::MildeMultitrial: return "milde-multitrial";
    case RVariant::Constant1: return "constant-1";
    case RVariant::Constant1MinusUc: return "constant-1-minus-uc";
    case RVariant::Jazwinski: return "jazwinski";
    case RVariant::Penny: return "penny";
    case RVariant::Zero: return "zero";
    case RVariant::FixedR: return "fixed";
  }
  return "unknown";
}

inline const char* q_variant_name(QVariant v) {
  switch (v) {
    case QVariant::AkayHaykin: return "akay-haykin";
    case QVariant::Isaksson: return "isaksson";
    case QVariant::JazwinskiPenny: return "jazwinski-penny";
    case QVariant::Zero: return "zero";
    case QVariant::FixedQ: return "fixed";
  }
  return "unknown";
}

/// State-space configuration for the coefficient random walk. A defaults to
/// the identity; the Jazwinski/Penny rules follow the printed recipes with
/// scalar quantities transcribed through traces and are labeled experimental.
struct KalmanConfig {
  Eigen::MatrixXd A;               // empty = identity
  RVariant r_variant = RVariant::Schack;
  QVariant q_variant = QVariant::Isaksson;
  double uc = 0.01;                // tuning constant in (0,1)
  Eigen::VectorXd init_state;      // empty = zero
  Eigen::MatrixXd init_state_cov;  // empty = identity
  Eigen::MatrixXd q_fixed;         // QVariant::FixedQ
  Eigen::MatrixXd r_fixed;         // RVariant::FixedR
  double cov_trace_bound = 1e6;
  bool average_trials = true;      // multi-trial output is the trial mean

  void check() const {
    const bool fixed = r_variant == RVariant::FixedR &&
                       q_variant == QVariant::FixedQ;
    if (!fixed && !(uc > 0.0 && uc < 1.0))
      throw Error(ErrorCode::BadConfig, "UC must lie strictly in (0,1)");
  }
};

namespace detail {

struct FilterStore {
  std::vector<Eigen::VectorXd> prior_mean, post_mean;
  std::vector<Eigen::MatrixXd> prior_cov, post_cov;
  std::vector<Eigen::MatrixXd> q_used;  // Q applied at each prediction
  std::vector<Eigen::MatrixXd> r_used;  // R entering each gain
  Eigen::MatrixXd innovations;          // n x d (prior innovations)
  double log_likelihood = 0.0;
};

/// One Kalman pass over a single trial's rows. R/Q evolve per the selected
/// variants; shared_r, when non-null, is used verbatim (multi-trial pooling
/// updates it outside).
inline FilterStore kalman_pass(const TrialRows& rows, const KalmanConfig& cfg,
                               int d, const Eigen::MatrixXd* shared_r_seq,
                               bool store_for_smoother,
                               bool track_likelihood) {
  const int dp = static_cast<int>(rows.c.cols());
  const int n = static_cast<int>(rows.c.rows());
  const int sd = d * dp;
  const Eigen::MatrixXd A = cfg.A.size() ? cfg.A : Eigen::MatrixXd::Identity(sd, sd);
  Eigen::VectorXd state =
      cfg.init_state.size() ? cfg.init_state : Eigen::VectorXd::Zero(sd);
  Eigen::MatrixXd P = cfg.init_state_cov.size()
                          ? cfg.init_state_cov
                          : Eigen::MatrixXd::Identity(sd, sd);
  const double trace_limit = std::max(cfg.cov_trace_bound, P.trace());

  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(d, d);
  if (cfg.r_variant == RVariant::FixedR) R = cfg.r_fixed;
  if (cfg.r_variant == RVariant::Zero) R.setZero();
  if (cfg.r_variant == RVariant::Constant1MinusUc) R *= (1.0 - cfg.uc);
  double r_plus = 1.0, r_plus_prev = 1.0;  // Jazwinski/Penny scalar state
  double l_t = 0.0;                        // Jazwinski/Penny Q scalar state

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(sd, sd);
  switch (cfg.q_variant) {
    case QVariant::Isaksson:
      Q = cfg.uc * cfg.uc * Eigen::MatrixXd::Identity(sd, sd);
      break;
    case QVariant::FixedQ: Q = cfg.q_fixed; break;
    case QVariant::AkayHaykin: Q = cfg.uc * P; break;
    default: break;
  }

  FilterStore store;
  store.innovations.resize(n, d);
  if (store_for_smoother) {
    store.prior_mean.reserve(n);
    store.post_mean.reserve(n);
    store.prior_cov.reserve(n);
    store.post_cov.reserve(n);
    store.q_used.reserve(n);
  }

  for (int t = 0; t < n; ++t) {
    // predict
    Eigen::VectorXd prior = A * state;
    Eigen::MatrixXd P_prior = A * P * A.transpose() + Q;
    const Eigen::VectorXd c = rows.c.row(t);
    Eigen::VectorXd e = rows.z.row(t).transpose() - observe(prior, c, d);
    if (!e.allFinite())
      throw Error(ErrorCode::Divergence, "non-finite innovation in Kalman pass");

    // observation covariance per variant (prior innovation drives updates)
    Eigen::MatrixXd cpc_prior = cpc(P_prior, c, d);
    switch (cfg.r_variant) {
      case RVariant::Schack:
        R = (1.0 - cfg.uc) * R + cfg.uc * (e * e.transpose());
        break;
      case RVariant::MildeMultitrial:
        R = shared_r_seq->middleRows(t * d, d);
        break;
      case RVariant::Jazwinski:
      case RVariant::Penny: {
        const double q_t = cpc_prior.trace();
        const double e_sq = e.squaredNorm();
        r_plus_prev = r_plus;
        if (e_sq > q_t) r_plus = (1.0 - cfg.uc) * r_plus + cfg.uc * (e_sq - q_t);
        const double r_now =
            cfg.r_variant == RVariant::Jazwinski ? r_plus : r_plus_prev;
        R = std::max(r_now, 0.0) * Eigen::MatrixXd::Identity(d, d);
        break;
      }
      default: break;  // constants, zero, fixed
    }

    Eigen::MatrixXd S = cpc_prior + R;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw Error(ErrorCode::Divergence,
                  "innovation covariance is not positive definite");
    Eigen::MatrixXd PCt = pct(P_prior, c, d);            // sd x d
    Eigen::MatrixXd K = ldlt.solve(PCt.transpose()).transpose();  // sd x d
    state = prior + K * e;
    P = P_prior - K * PCt.transpose();
    P = 0.5 * (P + P.transpose());
    if (P.trace() > trace_limit)
      throw Error(ErrorCode::CovarianceBlowup,
                  "state covariance trace exceeded the configured bound",
                  {{"trace", P.trace()}, {"bound", trace_limit}});

    if (track_likelihood) {
      const double log_det = ldlt.vectorD().array().max(1e-300).log().sum();
      store.log_likelihood -=
          0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det +
                 e.dot(ldlt.solve(e)));
    }
    store.innovations.row(t) = e.transpose();
    if (store_for_smoother) {
      store.prior_mean.push_back(prior);
      store.prior_cov.push_back(P_prior);
      store.post_mean.push_back(state);
      store.post_cov.push_back(P);
      store.q_used.push_back(Q);
      store.r_used.push_back(R);
    }

    // process covariance per variant (posterior drives the data-driven rules)
    switch (cfg.q_variant) {
      case QVariant::AkayHaykin:
        Q = cfg.uc * P;
        break;
      case QVariant::JazwinskiPenny: {
        const double k_t = cpc(P, c, d).trace() / double(d) + R.trace() / double(d);
        const double e_sq = e.squaredNorm() / double(d);
        const double cc = c.squaredNorm();
        if (cc > 0.0) l_t = (1.0 - cfg.uc) * l_t + cfg.uc * (e_sq - k_t) / cc;
        Q = (l_t > 0.0 ? l_t : 0.0) * Eigen::MatrixXd::Identity(sd, sd);
        break;
      }
      default: break;  // constant over time
    }
  }
  return store;
}

/// Rauch-Tung-Striebel fixed-interval smoother over a stored forward pass.
inline void rts_smooth(const KalmanConfig& cfg, FilterStore& store, int sd) {
  const int n = static_cast<int>(store.post_mean.size());
  if (n == 0) return;
  const Eigen::MatrixXd A = cfg.A.size() ? cfg.A : Eigen::MatrixXd::Identity(sd, sd);
  for (int t = n - 2; t >= 0; --t) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(store.prior_cov[t + 1]);
    Eigen::MatrixXd gain =
        ldlt.solve(A * store.post_cov[t]).transpose();  // P_post A' P_prior^-1
    store.post_mean[t] +=
        gain * (store.post_mean[t + 1] - store.prior_mean[t + 1]);
    store.post_cov[t] +=
        gain * (store.post_cov[t + 1] - store.prior_cov[t + 1]) * gain.transpose();
    store.post_cov[t] = 0.5 * (store.post_cov[t] + store.post_cov[t].transpose());
  }
}

}  // namespace detail

/// Kalman-filter time-varying VAR with the configured R/Q update variants.
/// Multiple trials are filtered independently (states averaged when
/// average_trials) and require the multi-trial R variant.
inline TvVarTrajectory tv_var_kalman(const TimeSeriesSet& series,
                                     const std::vector<int>& channels,
                                     const HistorySpec& history,
                                     const KalmanConfig& cfg,
                                     bool smooth = false) {
  cfg.check();
  const int d = static_cast<int>(channels.size());
  const int K = series.n_trials();
  if (K > 1 && cfg.r_variant != RVariant::MildeMultitrial &&
      cfg.r_variant != RVariant::FixedR)
    throw Error(ErrorCode::VariantTrialMismatch,
                "this R variant is defined for single-trial data");
  if (K == 1 && cfg.r_variant == RVariant::MildeMultitrial)
    throw Error(ErrorCode::VariantTrialMismatch,
                "the multi-trial R variant needs at least two trials");

  std::vector<detail::TrialRows> rows;
  rows.reserve(K);
  for (const auto& trial : series.trials)
    rows.push_back(detail::trial_rows(trial, channels, history));
  const int n = static_cast<int>(rows[0].c.rows());
  const int dp = d * history.order;
  const int sd = d * dp;

  Eigen::MatrixXd shared_r;
  if (cfg.r_variant == RVariant::MildeMultitrial) {
    // Lockstep pre-pass: evolve the pooled R sequence from the K prior
    // innovations at each time, then filter each trial against it. States
    // stay independent across trials; only R is shared.
    shared_r.resize(n * d, d);
    std::vector<Eigen::VectorXd> state(K, cfg.init_state.size()
                                              ? cfg.init_state
                                              : Eigen::VectorXd::Zero(sd));
    std::vector<Eigen::MatrixXd> P(K, cfg.init_state_cov.size()
                                          ? cfg.init_state_cov
                                          : Eigen::MatrixXd::Identity(sd, sd));
    const Eigen::MatrixXd A =
        cfg.A.size() ? cfg.A : Eigen::MatrixXd::Identity(sd, sd);
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(d, d);
    std::vector<Eigen::MatrixXd> Q(
        K, Eigen::MatrixXd::Zero(sd, sd));
    for (int k = 0; k < K; ++k) {
      if (cfg.q_variant == QVariant::Isaksson)
        Q[k] = cfg.uc * cfg.uc * Eigen::MatrixXd::Identity(sd, sd);
      else if (cfg.q_variant == QVariant::FixedQ)
        Q[k] = cfg.q_fixed;
      else if (cfg.q_variant == QVariant::AkayHaykin)
        Q[k] = cfg.uc * P[k];
    }
    std::vector<Eigen::VectorXd> prior(K);
    std::vector<Eigen::MatrixXd> P_prior(K);
    Eigen::MatrixXd e_stack(K, d);
    for (int t = 0; t < n; ++t) {
      for (int k = 0; k < K; ++k) {
        prior[k] = A * state[k];
        P_prior[k] = A * P[k] * A.transpose() + Q[k];
        const Eigen::VectorXd c = rows[k].c.row(t);
        e_stack.row(k) =
            (rows[k].z.row(t).transpose() - detail::observe(prior[k], c, d))
                .transpose();
      }
      R = (1.0 - cfg.uc) * R +
          cfg.uc * (e_stack.transpose() * e_stack) / double(K - 1);
      shared_r.middleRows(t * d, d) = R;
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd c = rows[k].c.row(t);
        Eigen::MatrixXd S = detail::cpc(P_prior[k], c, d) + R;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
        Eigen::MatrixXd PCt = detail::pct(P_prior[k], c, d);
        Eigen::MatrixXd gain = ldlt.solve(PCt.transpose()).transpose();
        state[k] = prior[k] + gain * e_stack.row(k).transpose();
        P[k] = P_prior[k] - gain * PCt.transpose();
        P[k] = 0.5 * (P[k] + P[k].transpose());
        if (cfg.q_variant == QVariant::AkayHaykin) Q[k] = cfg.uc * P[k];
      }
    }
  }

  std::vector<detail::FilterStore> stores(K);
  for (int k = 0; k < K; ++k) {
    stores[k] = detail::kalman_pass(rows[k], cfg, d,
                                    shared_r.size() ? &shared_r : nullptr,
                                    true, false);
    if (smooth) detail::rts_smooth(cfg, stores[k], sd);
  }

  TvVarTrajectory traj;
  traj.method = TvMethod::Kalman;
  traj.dim = d;
  traj.order = history.order;
  traj.history = history;
  const int t0 = history.first_usable();
  for (int t = 0; t < n; ++t) traj.times.push_back(t0 + t);
  for (int t = 0; t < n; ++t) {
    if (K == 1) {
      traj.states.push_back(stores[0].post_mean[t]);
      traj.state_cov.push_back(stores[0].post_cov[t]);
    } else {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(sd);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(sd, sd);
      for (int k = 0; k < K; ++k) {
        mean += stores[k].post_mean[t];
        cov += stores[k].post_cov[t];
      }
      traj.states.push_back(mean / double(K));
      traj.state_cov.push_back(cov / double(K * K));
    }
  }
  for (int t = 0; t < n; ++t) {
    if (K == 1) {
      traj.obs_noise.push_back(stores[0].r_used[t]);
    } else {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
      for (int k = 0; k < K; ++k) acc += stores[k].r_used[t];
      traj.obs_noise.push_back(acc / double(K));
    }
  }
  for (int k = 0; k < K; ++k)
    traj.innovations.push_back(stores[k].innovations);
  return traj;
}

/// LMS or RLS adaptive recursion. LMS follows the plain gradient step
/// (no coefficient covariance); RLS is exponentially weighted least squares
/// with forgetting factor 1 - UC and an approximate coefficient covariance.
inline TvVarTrajectory tv_var_adaptive(const TimeSeriesSet& series,
                                       const std::vector<int>& channels,
                                       const HistorySpec& history,
                                       TvMethod method, double uc) {
  if (method != TvMethod::Lms && method != TvMethod::Rls)
    throw Error(ErrorCode::BadConfig, "adaptive method must be lms or rls");
  if (!(uc > 0.0 && uc < 1.0))
    throw Error(ErrorCode::BadConfig, "UC must lie strictly in (0,1)");
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  const int dp = d * p;
  const int sd = d * dp;
  const int K = series.n_trials();

  std::vector<detail::TrialRows> rows;
  for (const auto& trial : series.trials)
    rows.push_back(detail::trial_rows(trial, channels, history));
  const int n = static_cast<int>(rows[0].c.rows());

  TvVarTrajectory traj;
  traj.method = method;
  traj.dim = d;
  traj.order = p;
  traj.history = history;
  const int t0 = history.first_usable();
  for (int t = 0; t < n; ++t) traj.times.push_back(t0 + t);
  traj.states.assign(n, Eigen::VectorXd::Zero(sd));
  if (method == TvMethod::Rls)
    traj.state_cov.assign(n, Eigen::MatrixXd::Zero(sd, sd));

  double innov_energy = 0.0, data_energy = 0.0;
  long innov_count = 0;
  const double lambda = 1.0 - uc;
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd state = Eigen::VectorXd::Zero(sd);
    Eigen::MatrixXd P = 100.0 * Eigen::MatrixXd::Identity(dp, dp);  // RLS only
    Eigen::VectorXd innov_var = Eigen::VectorXd::Ones(d);
    Eigen::MatrixXd innov(n, d);
    for (int t = 0; t < n; ++t) {
      const Eigen::VectorXd c = rows[k].c.row(t);
      Eigen::VectorXd e =
          rows[k].z.row(t).transpose() - detail::observe(state, c, d);
      if (!e.allFinite() || state.cwiseAbs().maxCoeff() > 1e8)
        throw Error(ErrorCode::Divergence,
                    "adaptive recursion diverged (UC too large?)");
      innov.row(t) = e.transpose();
      innov_energy += e.squaredNorm();
      data_energy += rows[k].z.row(t).squaredNorm();
      ++innov_count;
      if (method == TvMethod::Lms) {
        for (int l = 0; l < d; ++l) state.segment(l * dp, dp) += uc * e(l) * c;
      } else {
        const double denom = lambda + c.dot(P * c);
        Eigen::VectorXd gain = (P * c) / denom;
        for (int l = 0; l < d; ++l) state.segment(l * dp, dp) += gain * e(l);
        P = (P - gain * (c.transpose() * P)) / lambda;
        P = 0.5 * (P + P.transpose());
        for (int l = 0; l < d; ++l)
          innov_var(l) = (1.0 - uc) * innov_var(l) + uc * e(l) * e(l);
      }
      traj.states[t] += state / double(K);
      if (method == TvMethod::Rls) {
        for (int l = 0; l < d; ++l)
          traj.state_cov[t].block(l * dp, l * dp, dp, dp) +=
              innov_var(l) * P / ((1.0 + lambda) * double(K) * double(K));
      }
    }
    traj.innovations.push_back(innov);
  }
  if (innov_count > 0 && innov_energy > 5.0 * data_energy)
    traj.divergence_flagged = true;
  return traj;
}

/// EM estimation of the state-space covariances Q and R (and optionally A).
struct KalmanEmResult {
  KalmanConfig config;          // FixedQ/FixedR with the estimates
  TvVarTrajectory trajectory;   // smoothed under the final parameters
  std::vector<double> log_likelihood;  // one value per EM iteration
};

inline KalmanEmResult kalman_em(const TimeSeriesSet& series,
                                const std::vector<int>& channels,
                                const HistorySpec& history, int n_iter,
                                bool fix_a_identity = true,
                                double q_init = 3e-6, double r_init = 1.0) {
  if (n_iter < 1) throw Error(ErrorCode::BadConfig, "need n_iter >= 1");
  const int d = static_cast<int>(channels.size());
  const int dp = d * history.order;
  const int sd = d * dp;
  const int K = series.n_trials();
  std::vector<detail::TrialRows> rows;
  for (const auto& trial : series.trials)
    rows.push_back(detail::trial_rows(trial, channels, history));
  const int n = static_cast<int>(rows[0].c.rows());

  KalmanConfig cfg;
  cfg.r_variant = RVariant::FixedR;
  cfg.q_variant = QVariant::FixedQ;
  cfg.A = Eigen::MatrixXd::Identity(sd, sd);
  cfg.q_fixed = q_init * Eigen::MatrixXd::Identity(sd, sd);
  cfg.r_fixed = r_init * Eigen::MatrixXd::Identity(d, d);
  cfg.init_state = Eigen::VectorXd::Zero(sd);
  cfg.init_state_cov = Eigen::MatrixXd::Identity(sd, sd);
  cfg.cov_trace_bound = 1e12;

  KalmanEmResult result;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < n_iter; ++iter) {
    // E step: filter, then smooth a copy so the filtered covariances remain
    // available for the smoother gains and lag-one covariances
    double ll = 0.0;
    std::vector<detail::FilterStore> fwd(K), sm(K);
    for (int k = 0; k < K; ++k) {
      fwd[k] = detail::kalman_pass(rows[k], cfg, d, nullptr, true, true);
      ll += fwd[k].log_likelihood;
      sm[k] = fwd[k];
      detail::rts_smooth(cfg, sm[k], sd);
    }
    result.log_likelihood.push_back(ll);
    if (ll < prev_ll - 1e-8 * (1.0 + std::abs(prev_ll)))
      throw Error(ErrorCode::LikelihoodDecrease,
                  "EM log-likelihood decreased beyond tolerance",
                  {{"previous", prev_ll}, {"current", ll}});
    prev_ll = ll;

    // lag-one smoothed covariance: cov(x_{t-1}, x_t | all) = G_{t-1} P_t^s
    // with smoother gain G_{t-1} = P_post_{t-1} A' (P_prior_t)^-1
    Eigen::MatrixXd s11 = Eigen::MatrixXd::Zero(sd, sd);
    Eigen::MatrixXd s10 = Eigen::MatrixXd::Zero(sd, sd);
    Eigen::MatrixXd s00 = Eigen::MatrixXd::Zero(sd, sd);
    Eigen::MatrixXd r_acc = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(sd);
    Eigen::MatrixXd p0 = Eigen::MatrixXd::Zero(sd, sd);
    long n_trans = 0, n_obs = 0;
    for (int k = 0; k < K; ++k) {
      for (int t = 1; t < n; ++t) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(fwd[k].prior_cov[t]);
        Eigen::MatrixXd gain =
            ldlt.solve(cfg.A * fwd[k].post_cov[t - 1]).transpose();
        Eigen::MatrixXd lag1 = gain * sm[k].post_cov[t];  // cov(x_{t-1}, x_t)
        s11 += sm[k].post_cov[t] +
               sm[k].post_mean[t] * sm[k].post_mean[t].transpose();
        s00 += sm[k].post_cov[t - 1] +
               sm[k].post_mean[t - 1] * sm[k].post_mean[t - 1].transpose();
        s10 += lag1.transpose() +
               sm[k].post_mean[t] * sm[k].post_mean[t - 1].transpose();
        ++n_trans;
      }
      for (int t = 0; t < n; ++t) {
        const Eigen::VectorXd c = rows[k].c.row(t);
        Eigen::VectorXd resid = rows[k].z.row(t).transpose() -
                                detail::observe(sm[k].post_mean[t], c, d);
        r_acc +=
            resid * resid.transpose() + detail::cpc(sm[k].post_cov[t], c, d);
        ++n_obs;
      }
      mu0 += sm[k].post_mean[0];
      p0 += sm[k].post_cov[0];
    }
    mu0 /= double(K);
    Eigen::MatrixXd p0_mean = Eigen::MatrixXd::Zero(sd, sd);
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd diff = sm[k].post_mean[0] - mu0;
      p0_mean += diff * diff.transpose();
    }
    p0 = (p0 + p0_mean) / double(K);

    if (!fix_a_identity) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(s00);
      cfg.A = ldlt.solve(s10.transpose()).transpose();
    }
    Eigen::MatrixXd q_new =
        (s11 - cfg.A * s10.transpose() - s10 * cfg.A.transpose() +
         cfg.A * s00 * cfg.A.transpose()) /
        double(n_trans);
    cfg.q_fixed = 0.5 * (q_new + q_new.transpose());
    Eigen::MatrixXd r_new = r_acc / double(n_obs);
    cfg.r_fixed = 0.5 * (r_new + r_new.transpose());
    cfg.init_state = mu0;
    cfg.init_state_cov = 0.5 * (p0 + p0.transpose());
  }

  // final smoothed trajectory under the estimated parameters
  result.trajectory = tv_var_kalman(series, channels, history, cfg, true);
  result.trajectory.method = TvMethod::Kalman;
  result.config = cfg;
  return result;
}

enum class BasisKind { Spline, WaveletLike };

namespace detail {

/// Evaluate n_basis basis functions at normalized u in [0,1].
/// Spline: clamped B-splines of degree min(3, n_basis-1).
/// WaveletLike: Haar system (constant first, then dyadic step wavelets).
inline Eigen::VectorXd basis_row(BasisKind kind, int n_basis, double u) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(n_basis);
  if (n_basis == 1) {
    row(0) = 1.0;
    return row;
  }
  if (kind == BasisKind::WaveletLike) {
    row(0) = 1.0;
    int idx = 1;
    for (int level = 0; idx < n_basis; ++level) {
      const int n_shift = 1 << level;
      for (int shift = 0; shift < n_shift && idx < n_basis; ++shift, ++idx) {
        const double lo = double(shift) / n_shift;
        const double hi = double(shift + 1) / n_shift;
        if (u >= lo && u < hi) {
          const double mid = 0.5 * (lo + hi);
          row(idx) = (u < mid ? 1.0 : -1.0) * std::sqrt(double(n_shift));
        }
      }
    }
    return row;
  }
  // clamped uniform B-spline basis via Cox-de Boor
  const int degree = std::min(3, n_basis - 1);
  const int n_knots = n_basis + degree + 1;
  std::vector<double> knots(n_knots);
  const int n_interior = n_basis - degree - 1;
  for (int i = 0; i < n_knots; ++i) {
    if (i <= degree)
      knots[i] = 0.0;
    else if (i >= n_basis)
      knots[i] = 1.0;
    else
      knots[i] = double(i - degree) / double(n_interior + 1);
  }
  const double x = std::min(std::max(u, 0.0), 1.0 - 1e-12);
  std::vector<double> b(n_knots - 1, 0.0);
  for (int i = 0; i < n_knots - 1; ++i)
    b[i] = (x >= knots[i] && x < knots[i + 1]) ? 1.0 : 0.0;
  for (int k = 1; k <= degree; ++k) {
    for (int i = 0; i + k + 1 < n_knots; ++i) {
      double left = 0.0, right = 0.0;
      if (knots[i + k] > knots[i])
        left = (x - knots[i]) / (knots[i + k] - knots[i]) * b[i];
      if (knots[i + k + 1] > knots[i + 1])
        right = (knots[i + k + 1] - x) / (knots[i + k + 1] - knots[i + 1]) *
                b[i + 1];
      b[i] = left + right;
    }
  }
  for (int i = 0; i < n_basis; ++i) row(i) = b[i];
  return row;
}

}  // namespace detail

/// Basis-expansion dynamic VAR: coefficients expanded on time-basis
/// functions, estimated by iterated generalized least squares where the
/// squared residuals regressed on the same basis supply the weights.
inline TvVarTrajectory tv_var_basis(const TimeSeriesSet& series,
                                    const std::vector<int>& channels,
                                    const HistorySpec& history, int n_basis,
                                    BasisKind basis = BasisKind::Spline,
                                    int max_iter = 20, double tol = 1e-6) {
  if (n_basis < 1) throw Error(ErrorCode::BadConfig, "need n_basis >= 1");
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  const int dp = d * p;
  const int n_coef = dp * n_basis;
  const int T = series.n_samples();
  const int t0 = history.first_usable();
  const int n_times = T - t0;
  const long n_rows = static_cast<long>(series.n_trials()) * n_times;
  if (n_coef >= n_rows)
    throw Error(ErrorCode::SingularExpandedDesign,
                "expanded design has at least as many columns as rows");

  // basis values per usable time
  Eigen::MatrixXd bvals(n_times, n_basis);
  for (int t = 0; t < n_times; ++t)
    bvals.row(t) =
        detail::basis_row(basis, n_basis,
                          n_times > 1 ? double(t) / double(n_times - 1) : 0.0)
            .transpose();

  // expanded regressors, pooled over trials
  Eigen::MatrixXd X(n_rows, n_coef);
  Eigen::MatrixXd Z(n_rows, d);
  std::vector<detail::TrialRows> rows;
  long r = 0;
  for (const auto& trial : series.trials) {
    auto tr = detail::trial_rows(trial, channels, history);
    for (int t = 0; t < n_times; ++t, ++r) {
      Z.row(r) = tr.z.row(t);
      for (int c = 0; c < dp; ++c)
        for (int b = 0; b < n_basis; ++b)
          X(r, c * n_basis + b) = tr.c(t, c) * bvals(t, b);
    }
    rows.push_back(std::move(tr));
  }

  Eigen::MatrixXd beta(n_coef, d);
  std::vector<Eigen::MatrixXd> eq_cov(d);
  Eigen::MatrixXd sigma_t = Eigen::MatrixXd::Ones(n_times, d);
  Eigen::MatrixXd weights = Eigen::MatrixXd::Ones(n_rows, d);
  double prev_change = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::MatrixXd beta_new(n_coef, d);
    for (int l = 0; l < d; ++l) {
      Eigen::VectorXd w = weights.col(l);
      Eigen::MatrixXd Xw = X.array().colwise() * w.array().sqrt();
      Eigen::VectorXd zw = Z.col(l).array() * w.array().sqrt();
      Eigen::MatrixXd gram = Xw.transpose() * Xw;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
      if (es.eigenvalues().minCoeff() <= 0.0 ||
          std::sqrt(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff()) >
              1e10)
        throw Error(ErrorCode::SingularExpandedDesign,
                    "expanded basis design is singular or ill-conditioned");
      Eigen::MatrixXd gram_inv = es.eigenvectors() *
                                 es.eigenvalues().cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose();
      beta_new.col(l) = gram_inv * (Xw.transpose() * zw);
      eq_cov[l] = gram_inv;
    }
    const double change =
        iter == 0 ? std::numeric_limits<double>::infinity()
                  : (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    if (change < tol) break;
    prev_change = change;

    // step 2: squared residuals on the basis give the per-time variances
    Eigen::MatrixXd resid = Z - X * beta;
    Eigen::MatrixXd bgram = bvals.transpose() * bvals * double(series.n_trials());
    Eigen::LDLT<Eigen::MatrixXd> bldlt(bgram);
    for (int l = 0; l < d; ++l) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_basis);
      long rr = 0;
      for (int k = 0; k < series.n_trials(); ++k)
        for (int t = 0; t < n_times; ++t, ++rr)
          rhs += bvals.row(t).transpose() * resid(rr, l) * resid(rr, l);
      Eigen::VectorXd gamma = bldlt.solve(rhs);
      const double floor_val =
          1e-8 * resid.col(l).squaredNorm() / double(n_rows);
      for (int t = 0; t < n_times; ++t)
        sigma_t(t, l) = std::max(bvals.row(t).dot(gamma), floor_val);
      rr = 0;
      for (int k = 0; k < series.n_trials(); ++k)
        for (int t = 0; t < n_times; ++t, ++rr)
          weights(rr, l) = 1.0 / sigma_t(t, l);
    }
  }
  (void)prev_change;

  TvVarTrajectory traj;
  traj.method = TvMethod::Basis;
  traj.dim = d;
  traj.order = p;
  traj.history = history;
  const int sd = d * dp;
  for (int t = 0; t < n_times; ++t) {
    traj.times.push_back(t0 + t);
    Eigen::VectorXd state(sd);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(sd, sd);
    // J maps stacked (regressor, basis) coefficients to per-time coefficients
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dp, n_coef);
    for (int c = 0; c < dp; ++c)
      for (int b = 0; b < n_basis; ++b) jac(c, c * n_basis + b) = bvals(t, b);
    for (int l = 0; l < d; ++l) {
      state.segment(l * dp, dp) = jac * beta.col(l);
      cov.block(l * dp, l * dp, dp, dp) = jac * eq_cov[l] * jac.transpose();
    }
    traj.states.push_back(state);
    traj.state_cov.push_back(cov);
    traj.noise_cov.push_back(sigma_t.row(t).asDiagonal());
  }
  for (int k = 0; k < series.n_trials(); ++k) {
    Eigen::MatrixXd innov(n_times, d);
    for (int t = 0; t < n_times; ++t) {
      Eigen::VectorXd pred =
          detail::observe(traj.states[t], rows[k].c.row(t), d);
      innov.row(t) = rows[k].z.row(t) - pred.transpose();
    }
    traj.innovations.push_back(innov);
  }
  return traj;
}

enum class TvStat { Wald, SpectralGgc, Dtf, Pdc };

struct TvCausalityResult {
  TvStat kind = TvStat::Wald;
  Direction direction;
  std::vector<int> times;
  Eigen::VectorXd values;            // Wald statistic per time
  Eigen::VectorXd p_values;          // Wald only
  Eigen::VectorXd freqs;             // spectral kinds
  Eigen::MatrixXd time_freq_values;  // n_times x n_freqs
  int df = 0;
};

/// Windowed innovation covariance around each trajectory time.
inline std::vector<Eigen::MatrixXd> windowed_innovation_cov(
    const TvVarTrajectory& traj, int window_len = 100) {
  if (traj.innovations.empty())
    throw Error(ErrorCode::MissingStateCov,
                "trajectory carries no innovations for a local noise estimate");
  const int n = static_cast<int>(traj.times.size());
  const int d = traj.dim;
  std::vector<Eigen::MatrixXd> out(n);
  const int half = std::max(1, window_len / 2);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    long count = 0;
    for (const auto& innov : traj.innovations) {
      for (int t = lo; t <= hi; ++t) {
        acc += innov.row(t).transpose() * innov.row(t);
        ++count;
      }
    }
    out[i] = acc / double(std::max<long>(count, 1));
  }
  return out;
}

/// Per-time causality statistics on a coefficient trajectory: a Wald test of
/// the causal block against chi-square(p), or a time-frequency map of the
/// spectral statistics applied to each per-time model snapshot.
inline TvCausalityResult tv_causality(const TvVarTrajectory& traj, TvStat stat,
                                      int source, int target,
                                      int n_freqs = 128,
                                      int noise_window = 100) {
  const int n = static_cast<int>(traj.times.size());
  const int d = traj.dim;
  const int p = traj.order;
  const int dp = d * p;
  TvCausalityResult r;
  r.kind = stat;
  r.direction = {source, target, {}};
  r.times = traj.times;
  if (stat == TvStat::Wald) {
    if (traj.state_cov.empty())
      throw Error(ErrorCode::MissingStateCov,
                  "trajectory carries no state covariance for the Wald test");
    r.values.resize(n);
    r.p_values.resize(n);
    r.df = p;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd block(p);
      Eigen::MatrixXd cov(p, p);
      for (int a = 0; a < p; ++a) {
        const int ia = target * dp + a * d + source;
        block(a) = traj.states[i](ia);
        for (int b = 0; b < p; ++b)
          cov(a, b) = traj.state_cov[i](ia, target * dp + b * d + source);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        r.values(i) = 0.0;
        r.p_values(i) = 1.0;
        continue;
      }
      r.values(i) = block.dot(ldlt.solve(block));
      r.p_values(i) = chi2_sf(r.values(i), double(p));
    }
    return r;
  }

  std::vector<Eigen::MatrixXd> noise =
      traj.noise_cov.empty() ? windowed_innovation_cov(traj, noise_window)
                             : traj.noise_cov;
  r.freqs = Eigen::VectorXd::LinSpaced(n_freqs, 0.0, 0.5);
  r.time_freq_values.resize(n, n_freqs);
  for (int i = 0; i < n; ++i) {
    VarModel snapshot;
    snapshot.order = p;
    snapshot.dim = d;
    snapshot.coeffs = detail::coeffs_from_state(traj.states[i], d, p);
    snapshot.noise_cov = noise[i];
    snapshot.noise_cov_ml = noise[i];
    snapshot.history = traj.history;
    snapshot.n_obs = n;
    auto decomp = spectral_decompose(snapshot, n_freqs);
    Eigen::VectorXd vals;
    switch (stat) {
      case TvStat::SpectralGgc:
        vals = geweke_spectral_gc(decomp, source, target, 1.1).values;
        break;
      case TvStat::Dtf:
        vals = dtf(decomp, source, target).values;
        break;
      case TvStat::Pdc:
        vals = pdc(decomp, source, target).values;
        break;
      default:
        throw Error(ErrorCode::BadConfig, "unsupported tv statistic");
    }
    r.time_freq_values.row(i) = vals.transpose();
  }
  return r;
}

}  // namespace grangerlab

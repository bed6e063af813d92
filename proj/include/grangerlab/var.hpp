#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "grangerlab/distributions.hpp"
#include "grangerlab/errors.hpp"
#include "grangerlab/time_series.hpp"

namespace grangerlab {

/// Fitted (V)AR model. coeffs[j](l,m) is the lag-(j+1) influence of channel m
/// on channel l within the fitted channel subset. noise_cov uses the
/// degrees-of-freedom corrected divisor T_eff - d*p (the F-test path);
/// noise_cov_ml uses T_eff (likelihood / information criteria).
struct VarModel {
  int order = 0;
  int dim = 0;
  std::vector<Eigen::MatrixXd> coeffs;
  Eigen::MatrixXd noise_cov;
  Eigen::MatrixXd noise_cov_ml;
  Eigen::VectorXd intercept;  // zero unless fitted with an intercept
  long n_obs = 0;             // pooled usable regression rows T_eff
  HistorySpec history;
  std::vector<std::string> channel_names;
};

struct FitDiagnostics {
  std::vector<Eigen::MatrixXd> residuals;  // per trial: usable rows x d
  std::vector<int> first_time;             // per trial: time index of row 0
  Eigen::MatrixXd residual_autocorr;       // autocorr_lags x d, lag 1..L
  double log_likelihood = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int order = 0;
};

struct FitOptions {
  bool intercept = false;
  double condition_threshold = 1e10;
  int autocorr_lags = 20;
  // Force a common first usable time (used by select_order so every
  // candidate order sees the identical row set). -1 = derive from history.
  int min_first_time = -1;
};

struct VarFit {
  VarModel model;
  FitDiagnostics diagnostics;
};

namespace detail {

/// Pooled regression rows over all trials. Column layout is lag-major:
/// column j*d + m holds channel `channels[m]` at lag offset j; an intercept,
/// when requested, is the final column. Rows never straddle trial boundaries.
struct RegressionRows {
  Eigen::MatrixXd X;            // n_rows x (d*p [+1])
  Eigen::MatrixXd Z;            // n_rows x d, responses
  std::vector<int> trial_rows;  // rows contributed by each trial
  int first_time = 0;           // per-trial time index of the first row
};

inline RegressionRows build_rows(const TimeSeriesSet& series,
                                 const std::vector<int>& channels,
                                 const HistorySpec& history,
                                 bool intercept = false,
                                 int min_first_time = -1) {
  history.check();
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  const int T = series.n_samples();
  int t0 = std::max(history.first_usable(), min_first_time);
  const int rows_per_trial = T - t0;
  if (rows_per_trial < 1)
    throw Error(ErrorCode::InsufficientSamples,
                "history of order " + std::to_string(p) +
                    " leaves no usable samples");
  RegressionRows out;
  out.first_time = t0;
  const int n_rows = rows_per_trial * series.n_trials();
  const int n_cols = d * p + (intercept ? 1 : 0);
  out.X.resize(n_rows, n_cols);
  out.Z.resize(n_rows, d);
  int row = 0;
  for (const auto& trial : series.trials) {
    for (int t = t0; t < T; ++t, ++row) {
      for (int m = 0; m < d; ++m) out.Z(row, m) = trial(t, channels[m]);
      for (int j = 0; j < p; ++j) {
        const int lag_t = t - history.lag_offset(j);
        for (int m = 0; m < d; ++m)
          out.X(row, j * d + m) = trial(lag_t, channels[m]);
      }
      if (intercept) out.X(row, n_cols - 1) = 1.0;
    }
    out.trial_rows.push_back(rows_per_trial);
  }
  return out;
}

struct OlsSolution {
  Eigen::MatrixXd coef;          // n_cols x d
  Eigen::MatrixXd residuals;     // n_rows x d
  Eigen::MatrixXd gram_inverse;  // (X'X)^-1
  Eigen::VectorXd rss;           // per response column
};

/// Least squares with a Gram-matrix condition check; cond(X) above the
/// threshold (or a non-positive spectrum) raises SingularDesign.
inline OlsSolution solve_ols(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                             double condition_threshold = 1e10) {
  Eigen::MatrixXd gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  if (!(ev_max > 0.0) || ev_min <= 0.0 ||
      std::sqrt(ev_max / ev_min) > condition_threshold)
    throw Error(ErrorCode::SingularDesign,
                "regressor Gram matrix is singular or ill-conditioned",
                {{"condition", ev_min > 0.0 ? std::sqrt(ev_max / ev_min)
                                            : std::numeric_limits<double>::infinity()}});
  OlsSolution sol;
  sol.gram_inverse =
      es.eigenvectors() *
      es.eigenvalues().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();
  sol.coef = sol.gram_inverse * (X.transpose() * Z);
  sol.residuals = Z - X * sol.coef;
  sol.rss = sol.residuals.colwise().squaredNorm();
  return sol;
}

inline double log_det_psd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    double s = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
      s += std::log(std::max(es.eigenvalues()(i), 1e-300));
    return s;
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

inline std::vector<int> all_channels(const TimeSeriesSet& series) {
  std::vector<int> idx(series.n_channels());
  for (int i = 0; i < series.n_channels(); ++i) idx[i] = i;
  return idx;
}

/// Fit a VAR(p) on the selected channels by pooled ordinary least squares.
inline VarFit fit_var(const TimeSeriesSet& series,
                      const std::vector<int>& channels,
                      const HistorySpec& history, const FitOptions& opts = {}) {
  const int d = static_cast<int>(channels.size());
  const int p = history.order;
  if (d < 1) throw Error(ErrorCode::BadConfig, "empty channel subset");
  for (int c : channels)
    if (c < 0 || c >= series.n_channels())
      throw Error(ErrorCode::BadConfig, "channel index out of range");
  const int T = series.n_samples();
  int t0 = std::max(history.first_usable(), opts.min_first_time);
  const long usable = static_cast<long>(series.n_trials()) * (T - t0);
  if (usable <= static_cast<long>(d) * p + 10)
    throw Error(ErrorCode::InsufficientSamples,
                "need K*(T - delay - 1 - (p-1)*lag_step) > d*p + 10 usable samples");

  auto rows = detail::build_rows(series, channels, history, opts.intercept,
                                 opts.min_first_time);
  auto sol = detail::solve_ols(rows.X, rows.Z, opts.condition_threshold);
  const long n = rows.X.rows();
  const int k = d * p;

  VarFit fit;
  VarModel& model = fit.model;
  model.order = p;
  model.dim = d;
  model.history = history;
  model.n_obs = n;
  model.coeffs.resize(p);
  for (int j = 0; j < p; ++j) {
    model.coeffs[j].resize(d, d);
    for (int l = 0; l < d; ++l)
      for (int m = 0; m < d; ++m) model.coeffs[j](l, m) = sol.coef(j * d + m, l);
  }
  model.intercept = opts.intercept ? Eigen::VectorXd(sol.coef.row(k).transpose())
                                   : Eigen::VectorXd::Zero(d);
  const int k_eq = k + (opts.intercept ? 1 : 0);
  Eigen::MatrixXd cross = sol.residuals.transpose() * sol.residuals;
  model.noise_cov = cross / double(n - k_eq);
  model.noise_cov_ml = cross / double(n);
  if (!series.channel_names.empty())
    for (int c : channels) model.channel_names.push_back(series.channel_names[c]);

  FitDiagnostics& diag = fit.diagnostics;
  diag.order = p;
  int row = 0;
  for (std::size_t tr = 0; tr < series.trials.size(); ++tr) {
    const int nr = rows.trial_rows[tr];
    diag.residuals.push_back(sol.residuals.middleRows(row, nr));
    diag.first_time.push_back(rows.first_time);
    row += nr;
  }
  const int n_lags = std::min<long>(opts.autocorr_lags, n / 2);
  diag.residual_autocorr = Eigen::MatrixXd::Zero(n_lags, d);
  for (int c = 0; c < d; ++c) {
    double denom = 0.0;
    for (const auto& res : diag.residuals) denom += res.col(c).squaredNorm();
    for (int lag = 1; lag <= n_lags; ++lag) {
      double num = 0.0;
      for (const auto& res : diag.residuals) {
        const int nr = static_cast<int>(res.rows());
        if (nr > lag)
          num += res.col(c).head(nr - lag).dot(res.col(c).tail(nr - lag));
      }
      diag.residual_autocorr(lag - 1, c) = denom > 0.0 ? num / denom : 0.0;
    }
  }
  const double log_det = detail::log_det_psd(model.noise_cov_ml);
  diag.log_likelihood =
      -0.5 * double(n) * (d * std::log(2.0 * std::numbers::pi) + log_det + d);
  diag.aic = log_det + 2.0 * double(p) * d * d / double(n);
  diag.bic = log_det + double(p) * d * d * std::log(double(n)) / double(n);
  return fit;
}

/// Restricted single-channel AR(p) fit; noise_cov holds the innovation
/// variance of the own-history model.
inline VarFit fit_ar(const TimeSeriesSet& series, int channel,
                     const HistorySpec& history, const FitOptions& opts = {}) {
  return fit_var(series, {channel}, history, opts);
}

enum class OrderCriterion { Aic, Bic };

/// Order selection over p = 1..p_max on a common row set (the rows usable at
/// p_max), so criteria are comparable. Ties break toward smaller p.
inline int select_order(const TimeSeriesSet& series,
                        const std::vector<int>& channels, int p_max,
                        OrderCriterion criterion, const HistorySpec& base = {},
                        std::vector<double>* scores_out = nullptr) {
  if (p_max < 1) throw Error(ErrorCode::BadConfig, "p_max must be >= 1");
  HistorySpec probe = base;
  probe.order = p_max;
  const int common_t0 = probe.first_usable();
  int best_p = 1;
  double best_score = std::numeric_limits<double>::infinity();
  if (scores_out) scores_out->assign(p_max, 0.0);
  for (int p = 1; p <= p_max; ++p) {
    HistorySpec h = base;
    h.order = p;
    FitOptions opts;
    opts.min_first_time = common_t0;
    auto fit = fit_var(series, channels, h, opts);
    const double score = criterion == OrderCriterion::Aic ? fit.diagnostics.aic
                                                          : fit.diagnostics.bic;
    if (scores_out) (*scores_out)[p - 1] = score;
    if (score < best_score - 1e-12) {
      best_score = score;
      best_p = p;
    }
  }
  return best_p;
}

struct WhitenessReport {
  Eigen::VectorXd statistic;  // per channel Ljung-Box Q over max_lag lags
  Eigen::VectorXd p_value;
  int df = 0;
  int max_lag = 0;
};

/// Ljung-Box style portmanteau check of residual autocorrelations,
/// chi-square reference with df = max_lag - p. Advisory.
inline WhitenessReport residual_whiteness(const FitDiagnostics& diag,
                                          int max_lag) {
  if (max_lag <= diag.order)
    throw Error(ErrorCode::MaxLagTooSmall,
                "max_lag must exceed the fitted order");
  if (diag.residuals.empty())
    throw Error(ErrorCode::EmptyInput, "diagnostics carry no residuals");
  const int d = static_cast<int>(diag.residuals[0].cols());
  long n = 0;
  for (const auto& res : diag.residuals) n += res.rows();
  WhitenessReport rep;
  rep.max_lag = max_lag;
  rep.df = max_lag - diag.order;
  rep.statistic = Eigen::VectorXd::Zero(d);
  rep.p_value = Eigen::VectorXd::Zero(d);
  for (int c = 0; c < d; ++c) {
    double denom = 0.0;
    for (const auto& res : diag.residuals) denom += res.col(c).squaredNorm();
    double q = 0.0;
    for (int lag = 1; lag <= max_lag; ++lag) {
      double num = 0.0;
      for (const auto& res : diag.residuals) {
        const int nr = static_cast<int>(res.rows());
        if (nr > lag)
          num += res.col(c).head(nr - lag).dot(res.col(c).tail(nr - lag));
      }
      const double r = denom > 0.0 ? num / denom : 0.0;
      q += r * r / double(n - lag);
    }
    q *= double(n) * (double(n) + 2.0);
    rep.statistic(c) = q;
    rep.p_value(c) = chi2_sf(q, rep.df);
  }
  return rep;
}

}  // namespace grangerlab

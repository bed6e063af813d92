#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "grangerlab/distributions.hpp"
#include "grangerlab/errors.hpp"
#include "grangerlab/var.hpp"

namespace grangerlab {

struct Direction {
  int source = 0;
  int target = 0;
  std::vector<int> conditioning;
};

/// Time-domain Granger test outcome. f_* fields come from the nested
/// variance-ratio test, wald_* from the coefficient test; either family is
/// NaN when the corresponding test was not run.
struct GcTimeResult {
  Direction direction;
  double f_geweke = std::numeric_limits<double>::quiet_NaN();  // ln(S1/S2)
  double f_stat = std::numeric_limits<double>::quiet_NaN();
  double f_df1 = 0.0;
  double f_df2 = 0.0;
  double f_pvalue = std::numeric_limits<double>::quiet_NaN();
  double wald_stat = std::numeric_limits<double>::quiet_NaN();
  int wald_df = 0;
  double wald_pvalue = std::numeric_limits<double>::quiet_NaN();
  double restricted_var = std::numeric_limits<double>::quiet_NaN();   // S1
  double unrestricted_var = std::numeric_limits<double>::quiet_NaN(); // S2
  long n_obs = 0;
};

/// Variance-ratio F statistic for m restrictions on a common row set.
inline void fill_f_from_rss(GcTimeResult& r, double rss_r, double rss_ur,
                            int m, long t_eff, int n_regressors_ur) {
  r.f_geweke = std::log(rss_r / rss_ur);
  const double df2 = double(t_eff - n_regressors_ur - 1);
  r.f_df1 = double(m);
  r.f_df2 = df2;
  double f = ((rss_r - rss_ur) / double(m)) / (rss_ur / df2);
  r.f_stat = f;
  r.f_pvalue = f_sf(std::max(f, 0.0), double(m), df2);
}

namespace detail {

struct NestedFit {
  double rss_restricted = 0.0;
  double rss_unrestricted = 0.0;
  Eigen::VectorXd causal_coef;        // target-equation source-lag coefficients
  Eigen::MatrixXd causal_coef_cov;    // their OLS covariance block
  long n_rows = 0;
  int n_regressors_ur = 0;
  Eigen::MatrixXd residuals_r;        // target-equation residuals, pooled rows
  Eigen::MatrixXd residuals_ur;
};

/// Fit the restricted (no source history) and unrestricted target equations
/// on the identical pooled row set.
inline NestedFit nested_target_fit(const TimeSeriesSet& series, int source,
                                   int target,
                                   const std::vector<int>& conditioning,
                                   const HistorySpec& history,
                                   const FitOptions& opts = {}) {
  if (source == target)
    throw Error(ErrorCode::ChannelOverlap, "source equals target");
  for (int w : conditioning)
    if (w == source || w == target)
      throw Error(ErrorCode::ChannelOverlap,
                  "conditioning set overlaps source or target");
  std::vector<int> channels{target, source};
  channels.insert(channels.end(), conditioning.begin(), conditioning.end());
  const int C = static_cast<int>(channels.size());
  const int p = history.order;

  auto rows = build_rows(series, channels, history, opts.intercept,
                         opts.min_first_time);
  const long n = rows.X.rows();
  if (n <= static_cast<long>(C) * p + 10)
    throw Error(ErrorCode::InsufficientSamples, "too few usable rows");

  // Unrestricted: all channels' lags. Restricted: drop the source columns.
  std::vector<int> source_cols, keep_cols;
  for (int j = 0; j < p; ++j)
    for (int c = 0; c < C; ++c) {
      if (c == 1)
        source_cols.push_back(j * C + c);
      else
        keep_cols.push_back(j * C + c);
    }
  if (opts.intercept) keep_cols.push_back(C * p);

  Eigen::MatrixXd X_r(n, keep_cols.size());
  for (std::size_t i = 0; i < keep_cols.size(); ++i)
    X_r.col(i) = rows.X.col(keep_cols[i]);
  Eigen::MatrixXd y = rows.Z.col(0);

  auto ur = solve_ols(rows.X, y, opts.condition_threshold);
  auto re = solve_ols(X_r, y, opts.condition_threshold);

  NestedFit out;
  out.n_rows = n;
  out.n_regressors_ur = static_cast<int>(rows.X.cols());
  out.rss_unrestricted = ur.rss(0);
  out.rss_restricted = re.rss(0);
  out.residuals_r = re.residuals;
  out.residuals_ur = ur.residuals;
  out.causal_coef.resize(p);
  for (int j = 0; j < p; ++j) out.causal_coef(j) = ur.coef(source_cols[j], 0);
  const double sigma2 = ur.rss(0) / double(n - rows.X.cols());
  out.causal_coef_cov.resize(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      out.causal_coef_cov(a, b) =
          sigma2 * ur.gram_inverse(source_cols[a], source_cols[b]);
  return out;
}

}  // namespace detail

/// Conditional Granger F test: does the source's history improve the target
/// prediction beyond the target's own and the conditioning set's histories?
inline GcTimeResult conditional_granger_f_test(
    const TimeSeriesSet& series, int source, int target,
    const std::vector<int>& conditioning, const HistorySpec& history) {
  auto fit = detail::nested_target_fit(series, source, target, conditioning,
                                       history);
  GcTimeResult r;
  r.direction = {source, target, conditioning};
  r.n_obs = fit.n_rows;
  fill_f_from_rss(r, fit.rss_restricted, fit.rss_unrestricted, history.order,
                  fit.n_rows, fit.n_regressors_ur);
  const long n = fit.n_rows;
  r.restricted_var =
      fit.rss_restricted / double(n - (fit.n_regressors_ur - history.order));
  r.unrestricted_var = fit.rss_unrestricted / double(n - fit.n_regressors_ur);
  return r;
}

/// Bivariate Granger F test (Geweke variance ratio plus the F statistic).
inline GcTimeResult granger_f_test(const TimeSeriesSet& series, int source,
                                   int target, const HistorySpec& history) {
  return conditional_granger_f_test(series, source, target, {}, history);
}

/// Wald test on the p causal coefficients of the unrestricted target equation.
inline GcTimeResult granger_wald_test(const TimeSeriesSet& series, int source,
                                      int target, const HistorySpec& history,
                                      const std::vector<int>& conditioning = {}) {
  auto fit = detail::nested_target_fit(series, source, target, conditioning,
                                       history);
  GcTimeResult r;
  r.direction = {source, target, conditioning};
  r.n_obs = fit.n_rows;
  Eigen::LLT<Eigen::MatrixXd> llt(fit.causal_coef_cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularCovarianceBlock,
                "covariance block of the causal coefficients is singular");
  r.wald_stat = fit.causal_coef.dot(llt.solve(fit.causal_coef));
  r.wald_df = history.order;
  r.wald_pvalue = chi2_sf(r.wald_stat, double(r.wald_df));
  r.unrestricted_var =
      fit.rss_unrestricted / double(fit.n_rows - fit.n_regressors_ur);
  return r;
}

/// Run both time-domain tests on one shared nested fit.
inline GcTimeResult granger_tests(const TimeSeriesSet& series, int source,
                                  int target, const HistorySpec& history,
                                  const std::vector<int>& conditioning = {}) {
  auto fit = detail::nested_target_fit(series, source, target, conditioning,
                                       history);
  GcTimeResult r;
  r.direction = {source, target, conditioning};
  r.n_obs = fit.n_rows;
  fill_f_from_rss(r, fit.rss_restricted, fit.rss_unrestricted, history.order,
                  fit.n_rows, fit.n_regressors_ur);
  r.restricted_var = fit.rss_restricted /
                     double(fit.n_rows - (fit.n_regressors_ur - history.order));
  r.unrestricted_var =
      fit.rss_unrestricted / double(fit.n_rows - fit.n_regressors_ur);
  Eigen::LLT<Eigen::MatrixXd> llt(fit.causal_coef_cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularCovarianceBlock,
                "covariance block of the causal coefficients is singular");
  r.wald_stat = fit.causal_coef.dot(llt.solve(fit.causal_coef));
  r.wald_df = history.order;
  r.wald_pvalue = chi2_sf(r.wald_stat, double(r.wald_df));
  return r;
}

}  // namespace grangerlab

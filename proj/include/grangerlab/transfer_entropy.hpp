#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "grangerlab/errors.hpp"
#include "grangerlab/gc_time.hpp"
#include "grangerlab/resampling.hpp"
#include "grangerlab/time_series.hpp"

namespace grangerlab {

enum class TeEstimator { Gaussian, Kernel };

/// Transfer-entropy estimate in nats. history.order is the embedding
/// dimension and history.lag_step the embedding delay. local_values, when
/// present, hold the per-time summands whose mean is `value` (points dropped
/// for kernel density underflow are counted in zero_density_count).
struct TeEstimate {
  double value = 0.0;
  TeEstimator estimator = TeEstimator::Gaussian;
  HistorySpec history;
  double bandwidth = 0.0;  // kernel width multiplier actually used
  std::optional<double> p_value;
  std::optional<Eigen::VectorXd> local_values;
  std::vector<int> local_times;  // per-row (trial-pooled) time indices
  int zero_density_count = 0;
  long n_points = 0;
};

namespace detail {

/// Pooled embedding rows: column 0 = y_t, columns 1..p = y history,
/// columns p+1..2p = x history.
struct EmbeddingRows {
  Eigen::MatrixXd rows;  // n x (2p+1)
  std::vector<int> times;
  int order = 0;
};

inline EmbeddingRows build_embedding(const TimeSeriesSet& series, int source,
                                     int target, const HistorySpec& history) {
  history.check();
  const int p = history.order;
  const int T = series.n_samples();
  const int t0 = history.first_usable();
  if (T - t0 < 1)
    throw Error(ErrorCode::InsufficientSamples, "embedding leaves no samples");
  EmbeddingRows out;
  out.order = p;
  const long n = static_cast<long>(series.n_trials()) * (T - t0);
  out.rows.resize(n, 2 * p + 1);
  out.times.reserve(n);
  long row = 0;
  for (const auto& trial : series.trials) {
    for (int t = t0; t < T; ++t, ++row) {
      out.rows(row, 0) = trial(t, target);
      for (int j = 0; j < p; ++j) {
        const int lag_t = t - history.lag_offset(j);
        out.rows(row, 1 + j) = trial(lag_t, target);
        out.rows(row, 1 + p + j) = trial(lag_t, source);
      }
      out.times.push_back(t);
    }
  }
  return out;
}

/// Leave-one-out unnormalized Gaussian-kernel sums for the four marginals
/// entering the TE ratio. Normalization constants cancel in the ratio.
struct KernelSums {
  Eigen::VectorXd joint;     // {y, y-past, x-past}
  Eigen::VectorXd ypast;     // {y-past}
  Eigen::VectorXd ypast_xp;  // {y-past, x-past}
  Eigen::VectorXd y_ypast;   // {y, y-past}
};

inline KernelSums kernel_sums(const Eigen::MatrixXd& rows,
                              const Eigen::VectorXd& inv_two_h_sq) {
  const long n = rows.rows();
  const int p = static_cast<int>((rows.cols() - 1) / 2);
  KernelSums sums;
  sums.joint = Eigen::VectorXd::Zero(n);
  sums.ypast = Eigen::VectorXd::Zero(n);
  sums.ypast_xp = Eigen::VectorXd::Zero(n);
  sums.y_ypast = Eigen::VectorXd::Zero(n);
  // Each row accumulates over all others; the inner loop order is fixed, so
  // results are identical however the outer loop is split across threads.
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const long i = static_cast<long>(ii);
    double s_joint = 0.0, s_ypast = 0.0, s_ypx = 0.0, s_yyp = 0.0;
    for (long j = 0; j < n; ++j) {
      if (j == i) continue;
      double e_y = rows(i, 0) - rows(j, 0);
      e_y = e_y * e_y * inv_two_h_sq(0);
      double e_yp = 0.0;
      for (int c = 1; c <= p; ++c) {
        const double diff = rows(i, c) - rows(j, c);
        e_yp += diff * diff * inv_two_h_sq(c);
      }
      double e_xp = 0.0;
      for (int c = p + 1; c <= 2 * p; ++c) {
        const double diff = rows(i, c) - rows(j, c);
        e_xp += diff * diff * inv_two_h_sq(c);
      }
      s_ypast += std::exp(-e_yp);
      s_ypx += std::exp(-(e_yp + e_xp));
      s_yyp += std::exp(-(e_y + e_yp));
      s_joint += std::exp(-(e_y + e_yp + e_xp));
    }
    sums.joint(i) = s_joint;
    sums.ypast(i) = s_ypast;
    sums.ypast_xp(i) = s_ypx;
    sums.y_ypast(i) = s_yyp;
  });
  return sums;
}

}  // namespace detail

/// Gaussian transfer entropy: half the log innovation-variance ratio of the
/// nested AR/VAR fits (the closed-form Gaussian KL evaluation). Identical
/// fits to the time-domain Granger tests, so value = F_geweke / 2 exactly.
inline TeEstimate te_gaussian(const TimeSeriesSet& series, int source,
                              int target, const HistorySpec& history) {
  auto fit = detail::nested_target_fit(series, source, target, {}, history);
  TeEstimate e;
  e.estimator = TeEstimator::Gaussian;
  e.history = history;
  e.value = 0.5 * std::log(fit.rss_restricted / fit.rss_unrestricted);
  e.n_points = fit.n_rows;
  return e;
}

/// Silverman-style per-dimension bandwidth for the joint space dimension.
inline double silverman_bandwidth(double sd, long n, int joint_dim) {
  const double d = double(joint_dim);
  return sd * std::pow(4.0 / ((d + 2.0) * double(n)), 1.0 / (d + 4.0));
}

/// Kernel plug-in transfer entropy: product-Gaussian density estimates on
/// the (2p+1)-dimensional embedding, sample-average form. bandwidth <= 0
/// selects the Silverman-style rule per dimension; a positive value is a
/// width in data units applied to every dimension.
inline TeEstimate te_kernel(const TimeSeriesSet& series, int source, int target,
                            const HistorySpec& history, double bandwidth = 0.0,
                            bool keep_local = false) {
  auto emb = detail::build_embedding(series, source, target, history);
  const long n = emb.rows.rows();
  if (n < 500)
    throw Error(ErrorCode::InsufficientSamples,
                "kernel TE needs at least 500 pooled samples");
  const int dim = static_cast<int>(emb.rows.cols());
  Eigen::VectorXd h(dim);
  if (bandwidth < 0.0)
    throw Error(ErrorCode::BandwidthNonPositive,
                "bandwidth must be positive (or zero for the automatic rule)");
  for (int c = 0; c < dim; ++c) {
    if (bandwidth > 0.0) {
      h(c) = bandwidth;
    } else {
      const double mean = emb.rows.col(c).mean();
      const double sd = std::sqrt(
          (emb.rows.col(c).array() - mean).square().sum() / double(n - 1));
      h(c) = silverman_bandwidth(sd, n, dim);
    }
    if (!(h(c) > 0.0))
      throw Error(ErrorCode::BandwidthNonPositive,
                  "degenerate dimension: zero bandwidth");
  }
  Eigen::VectorXd inv_two_h_sq = (2.0 * h.array().square()).inverse();
  auto sums = detail::kernel_sums(emb.rows, inv_two_h_sq);

  TeEstimate e;
  e.estimator = TeEstimator::Kernel;
  e.history = history;
  e.bandwidth = bandwidth > 0.0 ? bandwidth : h.mean();
  Eigen::VectorXd local(n);
  double total = 0.0;
  long used = 0;
  for (long i = 0; i < n; ++i) {
    const double num = sums.joint(i) * sums.ypast(i);
    const double den = sums.ypast_xp(i) * sums.y_ypast(i);
    if (!(num > 0.0) || !(den > 0.0)) {
      ++e.zero_density_count;
      local(i) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    local(i) = std::log(num / den);
    total += local(i);
    ++used;
  }
  if (used == 0)
    throw Error(ErrorCode::InsufficientSamples,
                "kernel densities underflowed at every point");
  e.value = total / double(used);
  e.n_points = used;
  if (keep_local) {
    e.local_values = local;
    e.local_times = emb.times;
  }
  return e;
}

/// Per-time local transfer entropy; the mean of the local values equals the
/// global estimate by construction. For the Gaussian estimator the local
/// value is the log ratio of the two fitted conditional normal densities
/// (ML variance divisor, so the mean telescopes exactly).
inline TeEstimate te_local(const TimeSeriesSet& series, int source, int target,
                           const HistorySpec& history,
                           TeEstimator estimator = TeEstimator::Gaussian,
                           double bandwidth = 0.0) {
  if (estimator == TeEstimator::Kernel)
    return te_kernel(series, source, target, history, bandwidth, true);
  auto fit = detail::nested_target_fit(series, source, target, {}, history);
  const long n = fit.n_rows;
  const double var_r = fit.rss_restricted / double(n);
  const double var_ur = fit.rss_unrestricted / double(n);
  TeEstimate e;
  e.estimator = TeEstimator::Gaussian;
  e.history = history;
  Eigen::VectorXd local(n);
  const double half_log_ratio = 0.5 * std::log(var_r / var_ur);
  for (long i = 0; i < n; ++i) {
    const double er = fit.residuals_r(i, 0);
    const double eu = fit.residuals_ur(i, 0);
    local(i) = half_log_ratio + 0.5 * (er * er / var_r - eu * eu / var_ur);
  }
  e.local_values = local;
  e.value = local.mean();
  e.n_points = n;
  const int t0 = history.first_usable();
  const int T = series.n_samples();
  for (int k = 0; k < series.n_trials(); ++k)
    for (int t = t0; t < T; ++t) e.local_times.push_back(t);
  return e;
}

/// Permutation significance: shuffle the source's trial assignment when
/// several trials exist, otherwise circularly shift the source.
inline TeEstimate te_permutation_test(const TimeSeriesSet& series, int source,
                                      int target, const HistorySpec& history,
                                      TeEstimator estimator, int n_perm,
                                      std::uint64_t seed,
                                      double bandwidth = 0.0) {
  if (n_perm < 99) throw Error(ErrorCode::BadConfig, "need n_perm >= 99");
  SurrogateScheme scheme;
  scheme.kind = series.n_trials() > 1 ? SurrogateKind::TrialShuffle
                                      : SurrogateKind::CircularShift;
  scheme.n_surrogates = n_perm;
  scheme.seed = seed;
  scheme.min_shift = history.order * history.lag_step + history.delay + 1;
  auto statistic = [&](const TimeSeriesSet& s) {
    return estimator == TeEstimator::Gaussian
               ? te_gaussian(s, source, target, history).value
               : te_kernel(s, source, target, history, bandwidth).value;
  };
  auto [p, nulls] = surrogate_pvalue(statistic, series, source, scheme);
  (void)nulls;
  TeEstimate e = estimator == TeEstimator::Gaussian
                     ? te_gaussian(series, source, target, history)
                     : te_kernel(series, source, target, history, bandwidth);
  e.p_value = p;
  return e;
}

/// Embedding selection by a leave-one-out k-nearest-neighbour one-step
/// predictor of the target from its own embedded history: grid search over
/// (order, lag_step) minimizing the prediction error, ties toward smaller
/// order then smaller lag_step. Superfluous embedding dimensions dilute the
/// neighbourhoods and raise the error, so the search settles on compact
/// embeddings.
inline HistorySpec select_embedding(const TimeSeriesSet& series, int target,
                                    int p_max, int tau_max,
                                    long max_points = 1500,
                                    int n_neighbours = 40) {
  if (p_max < 1 || tau_max < 1)
    throw Error(ErrorCode::BadConfig, "need p_max >= 1 and tau_max >= 1");
  HistorySpec deepest;
  deepest.order = p_max;
  deepest.lag_step = tau_max;
  const int common_t0 = deepest.first_usable();
  const int T = series.n_samples();
  if (T - common_t0 < 10)
    throw Error(ErrorCode::InsufficientSamples,
                "embedding grid exceeds the series length");

  HistorySpec best;
  double best_err = std::numeric_limits<double>::infinity();
  // temporal exclusion window: embeddings of nearby samples overlap, and
  // their targets stay correlated beyond the regression function, so they
  // must not serve as neighbours of one another
  const int theiler = common_t0;
  for (int p = 1; p <= p_max; ++p) {
    for (int tau = 1; tau <= tau_max; ++tau) {
      HistorySpec h;
      h.order = p;
      h.lag_step = tau;
      // common usable range so candidates are comparable
      std::vector<double> y;
      std::vector<Eigen::VectorXd> emb;
      std::vector<long> stamp;  // trial*T + t, for the exclusion window
      long trial_id = 0;
      for (const auto& trial : series.trials) {
        for (int t = common_t0; t < T; ++t) {
          Eigen::VectorXd v(p);
          for (int j = 0; j < p; ++j) v(j) = trial(t - h.lag_offset(j), target);
          emb.push_back(std::move(v));
          y.push_back(trial(t, target));
          stamp.push_back(trial_id * (2L * T + theiler) + t);
        }
        ++trial_id;
      }
      // standardize coordinates so distances are comparable across (p, tau)
      for (int j = 0; j < p; ++j) {
        double mean = 0.0, sq = 0.0;
        for (const auto& v : emb) mean += v(j);
        mean /= double(emb.size());
        for (const auto& v : emb) sq += (v(j) - mean) * (v(j) - mean);
        const double sd = std::sqrt(sq / double(emb.size() - 1));
        if (sd > 0.0)
          for (auto& v : emb) v(j) = (v(j) - mean) / sd;
      }
      const long n_all = static_cast<long>(y.size());
      const long stride = std::max<long>(1, n_all / max_points);
      std::vector<long> idx;
      for (long i = 0; i < n_all; i += stride) idx.push_back(i);
      const int k_nn =
          std::min<int>(n_neighbours, static_cast<int>(idx.size()) - 1);
      double err = 0.0;
      long used = 0;
      std::vector<std::pair<double, long>> dist;
      for (long a : idx) {
        dist.clear();
        for (long b : idx) {
          if (std::abs(stamp[a] - stamp[b]) <= theiler) continue;
          dist.emplace_back((emb[a] - emb[b]).squaredNorm(), b);
        }
        if (static_cast<int>(dist.size()) < k_nn) continue;
        std::nth_element(dist.begin(), dist.begin() + (k_nn - 1), dist.end());
        double pred = 0.0;
        for (int j = 0; j < k_nn; ++j) pred += y[dist[j].second];
        pred /= double(k_nn);
        const double diff = y[a] - pred;
        err += diff * diff;
        ++used;
      }
      if (used == 0)
        throw Error(ErrorCode::InsufficientSamples,
                    "no usable neighbourhoods for embedding selection");
      err /= double(used);
      if (err < best_err * (1.0 - 1e-12)) {
        best_err = err;
        best = h;
      }
    }
  }
  return best;
}

}  // namespace grangerlab

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "grangerlab/errors.hpp"

namespace grangerlab {

/// Multi-trial multichannel sampled signals. Every trial is a T x d matrix
/// (rows = time, columns = channels); all trials share T and d.
struct TimeSeriesSet {
  std::vector<Eigen::MatrixXd> trials;
  double sampling_rate = 1.0;
  std::vector<std::string> channel_names;
  double time_origin = 0.0;  // seconds, offset of sample 0

  int n_trials() const { return static_cast<int>(trials.size()); }
  int n_samples() const { return trials.empty() ? 0 : static_cast<int>(trials[0].rows()); }
  int n_channels() const { return trials.empty() ? 0 : static_cast<int>(trials[0].cols()); }
};

/// History window of a regression target: order lags spaced lag_step apart,
/// starting delay+1 samples back. Sample t regresses on samples
/// t-delay-1, t-delay-1-lag_step, ..., t-delay-1-(order-1)*lag_step.
struct HistorySpec {
  int order = 1;     // p
  int delay = 0;     // upsilon
  int lag_step = 1;  // tau

  /// Offset (in samples) of the j-th history sample behind t, j = 0..order-1.
  int lag_offset(int j) const { return delay + 1 + j * lag_step; }

  /// Smallest t (0-based) whose full history lies inside the trial.
  int first_usable() const { return lag_offset(order - 1); }

  void check() const {
    if (order < 1 || delay < 0 || lag_step < 1)
      throw Error(ErrorCode::BadConfig,
                  "history spec requires order >= 1, delay >= 0, lag_step >= 1");
  }
};

enum class DemeanScope { PerTrial, Pooled };

/// Check the TimeSeriesSet invariants and return the (unchanged) series.
inline TimeSeriesSet validate(const TimeSeriesSet& series) {
  if (series.trials.empty())
    throw Error(ErrorCode::EmptyInput, "no trials supplied");
  const auto rows = series.trials[0].rows();
  const auto cols = series.trials[0].cols();
  if (rows < 2 || cols < 1)
    throw Error(ErrorCode::EmptyInput,
                "need at least 2 samples and 1 channel per trial");
  for (std::size_t k = 0; k < series.trials.size(); ++k) {
    const auto& trial = series.trials[k];
    if (trial.rows() != rows || trial.cols() != cols)
      throw Error(ErrorCode::RaggedTrials,
                  "trial " + std::to_string(k + 1) +
                      " does not match the shape of trial 1");
    for (Eigen::Index t = 0; t < trial.rows(); ++t) {
      for (Eigen::Index c = 0; c < trial.cols(); ++c) {
        if (!std::isfinite(trial(t, c)))
          throw Error(ErrorCode::NonFiniteValue,
                      "non-finite value at trial " + std::to_string(k + 1) +
                          ", time " + std::to_string(t + 1) + ", channel " +
                          std::to_string(c + 1),
                      {{"trial", double(k + 1)},
                       {"time", double(t + 1)},
                       {"channel", double(c + 1)}});
      }
    }
  }
  if (!series.channel_names.empty() &&
      series.channel_names.size() != static_cast<std::size_t>(cols))
    throw Error(ErrorCode::RaggedTrials, "channel name count mismatch");
  if (!(series.sampling_rate > 0.0))
    throw Error(ErrorCode::BadConfig, "sampling_rate must be positive");
  return series;
}

/// Remove per-channel sample means, per trial or pooled over all trials.
inline TimeSeriesSet demean(const TimeSeriesSet& series,
                            DemeanScope scope = DemeanScope::PerTrial) {
  TimeSeriesSet out = series;
  if (scope == DemeanScope::PerTrial) {
    for (auto& trial : out.trials)
      trial.rowwise() -= trial.colwise().mean().eval();
  } else {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(series.n_channels());
    for (const auto& trial : series.trials) mean += trial.colwise().sum();
    mean /= double(series.n_trials()) * double(series.n_samples());
    for (auto& trial : out.trials) trial.rowwise() -= mean;
  }
  return out;
}

/// Remove a per-channel least-squares linear trend from each trial.
inline TimeSeriesSet detrend(const TimeSeriesSet& series) {
  TimeSeriesSet out = series;
  for (auto& trial : out.trials) {
    const Eigen::Index n = trial.rows();
    Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.0, double(n - 1));
    double t_mean = t.mean();
    Eigen::VectorXd tc = t.array() - t_mean;
    double denom = tc.squaredNorm();
    for (Eigen::Index c = 0; c < trial.cols(); ++c) {
      double y_mean = trial.col(c).mean();
      double slope = tc.dot(trial.col(c)) / denom;
      trial.col(c).array() -= y_mean + slope * tc.array();
    }
  }
  return out;
}

/// Advisory segment-wise first/second moment screen. Never blocks analysis.
struct StationarityReport {
  Eigen::MatrixXd segment_means;      // n_segments x d
  Eigen::MatrixXd segment_variances;  // n_segments x d
  Eigen::VectorXd variance_ratio;     // per channel: max/min segment variance
  std::vector<bool> channel_flagged;
  bool any_flagged = false;
  double threshold = 3.0;
};

inline StationarityReport stationarity_screen(const TimeSeriesSet& series,
                                              int n_segments,
                                              double ratio_threshold = 3.0) {
  const int T = series.n_samples();
  const int d = series.n_channels();
  if (n_segments < 2 || T / n_segments < 20)
    throw Error(ErrorCode::SegmentTooShort,
                "need n_segments >= 2 and at least 20 samples per segment");
  StationarityReport rep;
  rep.threshold = ratio_threshold;
  rep.segment_means = Eigen::MatrixXd::Zero(n_segments, d);
  rep.segment_variances = Eigen::MatrixXd::Zero(n_segments, d);
  rep.variance_ratio = Eigen::VectorXd::Zero(d);
  rep.channel_flagged.assign(d, false);
  const int seg_len = T / n_segments;
  for (int s = 0; s < n_segments; ++s) {
    const int start = s * seg_len;
    const int len = (s == n_segments - 1) ? T - start : seg_len;
    double denom = double(series.n_trials()) * double(len);
    for (int c = 0; c < d; ++c) {
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& trial : series.trials) {
        auto seg = trial.col(c).segment(start, len);
        sum += seg.sum();
        sum_sq += seg.squaredNorm();
      }
      double mean = sum / denom;
      rep.segment_means(s, c) = mean;
      rep.segment_variances(s, c) = sum_sq / denom - mean * mean;
    }
  }
  for (int c = 0; c < d; ++c) {
    double vmax = rep.segment_variances.col(c).maxCoeff();
    double vmin = rep.segment_variances.col(c).minCoeff();
    rep.variance_ratio(c) = vmin > 0.0 ? vmax / vmin
                                       : std::numeric_limits<double>::infinity();
    rep.channel_flagged[c] = rep.variance_ratio(c) > ratio_threshold;
    rep.any_flagged = rep.any_flagged || rep.channel_flagged[c];
  }
  return rep;
}

}  // namespace grangerlab

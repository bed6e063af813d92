#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "grangerlab/errors.hpp"
#include "grangerlab/parallel.hpp"
#include "grangerlab/rng.hpp"
#include "grangerlab/time_series.hpp"

namespace grangerlab {

enum class SurrogateKind { TrialShuffle, CircularShift, BlockPermutation };

inline const char* surrogate_kind_name(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::TrialShuffle: return "trial-shuffle";
    case SurrogateKind::CircularShift: return "circular-shift";
    case SurrogateKind::BlockPermutation: return "block-permutation";
  }
  return "unknown";
}

/// How to break the source-target link. min_shift should be at least
/// p*lag_step + delay + 1 so shifted histories never realign.
struct SurrogateScheme {
  SurrogateKind kind = SurrogateKind::CircularShift;
  int n_surrogates = 199;
  std::uint64_t seed = 0;
  int block_len = 0;   // block-permutation only
  int min_shift = 1;   // circular-shift only

  void check(const TimeSeriesSet& series) const {
    if (n_surrogates < 99)
      throw Error(ErrorCode::BadConfig, "need n_surrogates >= 99");
    const int T = series.n_samples();
    switch (kind) {
      case SurrogateKind::TrialShuffle:
        if (series.n_trials() < 2)
          throw Error(ErrorCode::TooFewTrialsForShuffle,
                      "trial-shuffle needs at least two trials");
        break;
      case SurrogateKind::CircularShift:
        if (min_shift < 1 || T - min_shift <= min_shift)
          throw Error(ErrorCode::SchemeInfeasible,
                      "circular shift range is empty for this min_shift");
        break;
      case SurrogateKind::BlockPermutation:
        if (block_len < 1 || block_len * 2 > T)
          throw Error(ErrorCode::SchemeInfeasible,
                      "need at least two blocks of block_len samples");
        break;
    }
  }
};

/// Deterministic surrogate number `index`: the designated channel is
/// permuted/shifted; all other channels stay untouched.
inline TimeSeriesSet make_surrogate(const TimeSeriesSet& series, int channel,
                                    const SurrogateScheme& scheme,
                                    int index) {
  auto engine = make_stream(scheme.seed, "surrogate",
                            static_cast<std::uint64_t>(index));
  TimeSeriesSet out = series;
  const int T = series.n_samples();
  const int K = series.n_trials();
  switch (scheme.kind) {
    case SurrogateKind::TrialShuffle: {
      std::vector<int> perm(K);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), engine);
      for (int k = 0; k < K; ++k)
        out.trials[k].col(channel) = series.trials[perm[k]].col(channel);
      break;
    }
    case SurrogateKind::CircularShift: {
      std::uniform_int_distribution<int> offset_dist(scheme.min_shift,
                                                     T - scheme.min_shift);
      for (int k = 0; k < K; ++k) {
        const int offset = offset_dist(engine);
        Eigen::VectorXd src = series.trials[k].col(channel);
        for (int t = 0; t < T; ++t)
          out.trials[k](t, channel) = src((t + offset) % T);
      }
      break;
    }
    case SurrogateKind::BlockPermutation: {
      const int n_blocks = T / scheme.block_len;
      for (int k = 0; k < K; ++k) {
        std::vector<int> perm(n_blocks);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), engine);
        Eigen::VectorXd src = series.trials[k].col(channel);
        for (int b = 0; b < n_blocks; ++b) {
          const int from = perm[b] * scheme.block_len;
          const int to = b * scheme.block_len;
          for (int i = 0; i < scheme.block_len; ++i)
            out.trials[k](to + i, channel) = src(from + i);
        }
        // the tail beyond n_blocks*block_len is left in place
      }
      break;
    }
  }
  return out;
}

struct SurrogateSamples {
  Eigen::MatrixXd null_values;  // n_surrogates x statistic dimension
  Eigen::VectorXd observed;
  Eigen::VectorXd p_values;     // (1 + #{null >= obs}) / (1 + n)
};

/// Generic permutation engine for a vector-valued statistic. Replicates run
/// in parallel from per-index substreams; results do not depend on the
/// thread count.
inline SurrogateSamples surrogate_pvalues(
    const std::function<Eigen::VectorXd(const TimeSeriesSet&)>& statistic,
    const TimeSeriesSet& series, int channel, const SurrogateScheme& scheme) {
  scheme.check(series);
  SurrogateSamples out;
  out.observed = statistic(series);
  const int dim = static_cast<int>(out.observed.size());
  out.null_values.resize(scheme.n_surrogates, dim);
  parallel_for(static_cast<std::size_t>(scheme.n_surrogates), [&](std::size_t i) {
    TimeSeriesSet surrogate =
        make_surrogate(series, channel, scheme, static_cast<int>(i));
    out.null_values.row(static_cast<int>(i)) = statistic(surrogate).transpose();
  });
  out.p_values.resize(dim);
  for (int j = 0; j < dim; ++j) {
    int count = 0;
    for (int i = 0; i < scheme.n_surrogates; ++i)
      if (out.null_values(i, j) >= out.observed(j)) ++count;
    out.p_values(j) = double(1 + count) / double(1 + scheme.n_surrogates);
  }
  return out;
}

/// Scalar-statistic convenience wrapper.
inline std::pair<double, Eigen::VectorXd> surrogate_pvalue(
    const std::function<double(const TimeSeriesSet&)>& statistic,
    const TimeSeriesSet& series, int channel, const SurrogateScheme& scheme) {
  auto res = surrogate_pvalues(
      [&](const TimeSeriesSet& s) {
        Eigen::VectorXd v(1);
        v(0) = statistic(s);
        return v;
      },
      series, channel, scheme);
  return {res.p_values(0), res.null_values.col(0)};
}

enum class MultiplicityMethod { Bonferroni, BenjaminiHochberg };

/// Bonferroni or Benjamini-Hochberg step-up adjustment.
inline std::vector<double> correct_multiplicity(const std::vector<double>& p,
                                                MultiplicityMethod method) {
  const std::size_t n = p.size();
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorCode::OutOfRangeP, "p-values must lie in [0,1]");
  std::vector<double> adj(n);
  if (method == MultiplicityMethod::Bonferroni) {
    for (std::size_t i = 0; i < n; ++i) adj[i] = std::min(1.0, p[i] * double(n));
    return adj;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double running = 1.0;
  for (std::size_t r = n; r-- > 0;) {
    const double candidate = p[order[r]] * double(n) / double(r + 1);
    running = std::min(running, candidate);
    adj[order[r]] = std::min(running, 1.0);
  }
  return adj;
}

}  // namespace grangerlab

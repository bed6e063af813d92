#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "grangerlab/distributions.hpp"
#include "grangerlab/errors.hpp"
#include "grangerlab/gc_time.hpp"
#include "grangerlab/resampling.hpp"
#include "grangerlab/var.hpp"

namespace grangerlab {

/// Per-frequency VAR decomposition on a uniform grid of normalized
/// frequencies in [0, 0.5]: coefficient matrix theta(w), transfer matrix
/// H(w) = theta(w)^-1, and spectral matrix S(w) = H Sigma H*.
struct SpectralDecomposition {
  Eigen::VectorXd freqs;  // normalized; physical = freq * sampling_rate
  std::vector<Eigen::MatrixXcd> theta;
  std::vector<Eigen::MatrixXcd> transfer;
  std::vector<Eigen::MatrixXcd> spectrum;
  VarModel source_model;

  int n_freqs() const { return static_cast<int>(freqs.size()); }
  int dim() const { return source_model.dim; }
};

enum class SpectralStat { Ggc, Dtf, Pdc };

inline const char* spectral_stat_name(SpectralStat s) {
  switch (s) {
    case SpectralStat::Ggc: return "ggc";
    case SpectralStat::Dtf: return "dtf";
    case SpectralStat::Pdc: return "pdc";
  }
  return "unknown";
}

struct SpectralCausalityResult {
  Direction direction;
  SpectralStat kind = SpectralStat::Ggc;
  Eigen::VectorXd freqs;
  Eigen::VectorXd values;
  std::optional<Eigen::VectorXd> p_values;
  double df1 = 0.0;  // reference-distribution metadata when p-values attached
  double df2 = 0.0;
  std::vector<std::string> warnings;
};

/// theta_lm(w) = delta_lm - sum_j coeff_lm(j) e^{-i 2 pi w j}, with the
/// standard convention delta_lm = 1 iff l = m (the zero-coefficient model
/// then gives theta = I and an invertible transfer matrix).
inline Eigen::MatrixXcd theta_at(const VarModel& model, double freq) {
  using namespace std::complex_literals;
  const int d = model.dim;
  Eigen::MatrixXcd theta = Eigen::MatrixXcd::Identity(d, d);
  for (int j = 0; j < model.order; ++j) {
    const double angle = -2.0 * std::numbers::pi * freq * double(j + 1);
    const std::complex<double> phase = std::exp(1i * angle);
    theta -= model.coeffs[j].cast<std::complex<double>>() * phase;
  }
  return theta;
}

inline SpectralDecomposition spectral_decompose(const VarModel& model,
                                                int n_freqs = 512) {
  if (model.dim < 1 || n_freqs < 2)
    throw Error(ErrorCode::BadConfig, "need dim >= 1 and n_freqs >= 2");
  SpectralDecomposition out;
  out.source_model = model;
  out.freqs = Eigen::VectorXd::LinSpaced(n_freqs, 0.0, 0.5);
  out.theta.reserve(n_freqs);
  out.transfer.reserve(n_freqs);
  out.spectrum.reserve(n_freqs);
  const Eigen::MatrixXcd sigma =
      model.noise_cov.cast<std::complex<double>>();
  for (int i = 0; i < n_freqs; ++i) {
    Eigen::MatrixXcd theta = theta_at(model, out.freqs(i));
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(theta, Eigen::ComputeFullU |
                                                      Eigen::ComputeFullV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > smax * 1e-13))
      throw Error(ErrorCode::SingularTheta,
                  "theta(w) numerically singular (root on the unit circle?)",
                  {{"frequency", out.freqs(i)}});
    Eigen::MatrixXcd h = theta.inverse();
    out.theta.push_back(std::move(theta));
    out.spectrum.push_back(h * sigma * h.adjoint());
    out.transfer.push_back(std::move(h));
  }
  return out;
}

namespace detail {

inline void require_channel(const SpectralDecomposition& d, int c) {
  if (c < 0 || c >= d.dim())
    throw Error(ErrorCode::BadConfig, "channel index out of range");
}

inline double innovation_correlation(const Eigen::MatrixXd& sigma, int a, int b) {
  const double denom = std::sqrt(sigma(a, a) * sigma(b, b));
  return denom > 0.0 ? sigma(a, b) / denom : 0.0;
}

}  // namespace detail

/// Geweke spectral Granger causality (log form): the log ratio of total to
/// intrinsic auto-spectral power of the target, with the innovation
/// cross-covariance projected to zero as the derivation requires.
inline SpectralCausalityResult geweke_spectral_gc(
    const SpectralDecomposition& decomp, int source, int target,
    double innovation_corr_threshold = 0.1) {
  detail::require_channel(decomp, source);
  detail::require_channel(decomp, target);
  if (decomp.dim() != 2)
    throw Error(ErrorCode::BadConfig,
                "Geweke spectral GC requires a bivariate model");
  if (source == target)
    throw Error(ErrorCode::ChannelOverlap, "source equals target");
  const Eigen::MatrixXd& sigma = decomp.source_model.noise_cov;
  const double corr = detail::innovation_correlation(sigma, source, target);
  if (std::abs(corr) >= innovation_corr_threshold)
    throw Error(ErrorCode::CorrelatedInnovations,
                "innovation correlation exceeds the admissibility threshold",
                {{"correlation", corr}, {"threshold", innovation_corr_threshold}});
  SpectralCausalityResult r;
  r.direction = {source, target, {}};
  r.kind = SpectralStat::Ggc;
  r.freqs = decomp.freqs;
  r.values.resize(decomp.n_freqs());
  const double sig_target = sigma(target, target);
  const double sig_source = sigma(source, source);
  for (int i = 0; i < decomp.n_freqs(); ++i) {
    const auto& h = decomp.transfer[i];
    const double intrinsic = std::norm(h(target, target)) * sig_target;
    const double causal = std::norm(h(target, source)) * sig_source;
    r.values(i) = std::log1p(causal / intrinsic);
  }
  return r;
}

/// Attach pointwise p-values by the approximate mapping T f(w) / p against
/// F(p, T - 2p). Surrogates are the reference method; this is a fast screen.
inline SpectralCausalityResult spectral_gc_f_test(SpectralCausalityResult result,
                                                  const VarModel& model) {
  const double t_eff = double(model.n_obs);
  const double p = double(model.order);
  Eigen::VectorXd pv(result.values.size());
  result.df1 = p;
  result.df2 = t_eff - 2.0 * p;
  for (int i = 0; i < result.values.size(); ++i)
    pv(i) = f_sf(t_eff * result.values(i) / p, result.df1, result.df2);
  result.p_values = pv;
  return result;
}

/// Directed transfer function from source to target. Normalized form divides
/// by all inflows to the target row; non-normalized is |H_ts|.
inline SpectralCausalityResult dtf(const SpectralDecomposition& decomp,
                                   int source, int target,
                                   bool normalized = true) {
  detail::require_channel(decomp, source);
  detail::require_channel(decomp, target);
  if (decomp.dim() < 2)
    throw Error(ErrorCode::BadConfig, "DTF requires at least two channels");
  SpectralCausalityResult r;
  r.direction = {source, target, {}};
  r.kind = SpectralStat::Dtf;
  r.freqs = decomp.freqs;
  r.values.resize(decomp.n_freqs());
  const double corr = detail::innovation_correlation(
      decomp.source_model.noise_cov, source, target);
  if (std::abs(corr) >= 0.1)
    r.warnings.push_back("innovation correlation " + std::to_string(corr) +
                         " is above 0.1; interpret with care");
  for (int i = 0; i < decomp.n_freqs(); ++i) {
    const auto& h = decomp.transfer[i];
    const double num = std::norm(h(target, source));
    if (!normalized) {
      r.values(i) = std::sqrt(num);
      continue;
    }
    double denom = 0.0;
    for (int m = 0; m < decomp.dim(); ++m) denom += std::norm(h(target, m));
    if (!(denom > 0.0))
      throw Error(ErrorCode::ZeroRow, "transfer-matrix row vanished",
                  {{"frequency", decomp.freqs(i)}});
    r.values(i) = std::sqrt(num / denom);
  }
  return r;
}

/// Partial directed coherence magnitude from source to target. The default
/// square-root column normalization keeps |PDC| in [0,1] with unit column
/// sum of squares; `printed_normalization` divides by the squared column
/// norm instead (compatibility form).
inline SpectralCausalityResult pdc(const SpectralDecomposition& decomp,
                                   int source, int target,
                                   bool printed_normalization = false) {
  detail::require_channel(decomp, source);
  detail::require_channel(decomp, target);
  if (decomp.dim() < 2)
    throw Error(ErrorCode::BadConfig, "PDC requires at least two channels");
  SpectralCausalityResult r;
  r.direction = {source, target, {}};
  r.kind = SpectralStat::Pdc;
  r.freqs = decomp.freqs;
  r.values.resize(decomp.n_freqs());
  const double corr = detail::innovation_correlation(
      decomp.source_model.noise_cov, source, target);
  if (std::abs(corr) >= 0.1)
    r.warnings.push_back("innovation correlation " + std::to_string(corr) +
                         " is above 0.1; interpret with care");
  for (int i = 0; i < decomp.n_freqs(); ++i) {
    const auto& theta = decomp.theta[i];
    double col_sq = 0.0;
    for (int l = 0; l < decomp.dim(); ++l) col_sq += std::norm(theta(l, source));
    if (!(col_sq > 0.0))
      throw Error(ErrorCode::ZeroColumn, "coefficient-matrix column vanished",
                  {{"frequency", decomp.freqs(i)}});
    const double num = std::abs(theta(target, source));
    r.values(i) = printed_normalization ? num / col_sq : num / std::sqrt(col_sq);
  }
  return r;
}

/// Per-frequency statistic values for a refitted series; shared by the
/// observed data and every surrogate. ggc_corr_threshold only applies to the
/// GGC statistic (pass > 1 to disable the admissibility check).
inline Eigen::VectorXd spectral_statistic_values(const TimeSeriesSet& series,
                                                 const std::vector<int>& channels,
                                                 const HistorySpec& history,
                                                 SpectralStat stat, int source,
                                                 int target, int n_freqs,
                                                 double ggc_corr_threshold = 0.1) {
  auto fit = fit_var(series, channels, history);
  auto decomp = spectral_decompose(fit.model, n_freqs);
  // source/target are positions within `channels` by the caller's contract
  switch (stat) {
    case SpectralStat::Ggc:
      return geweke_spectral_gc(decomp, source, target, ggc_corr_threshold)
          .values;
    case SpectralStat::Dtf:
      return dtf(decomp, source, target).values;
    case SpectralStat::Pdc:
      return pdc(decomp, source, target).values;
  }
  throw Error(ErrorCode::BadConfig, "unknown spectral statistic");
}

/// Pointwise surrogate p-values for a spectral statistic: the VAR is refitted
/// on every surrogate and the statistic recomputed per frequency. The GGC
/// admissibility check runs once on the observed fit; surrogate refits are
/// evaluated unconditionally.
inline SpectralCausalityResult spectral_significance_surrogate(
    const TimeSeriesSet& series, const HistorySpec& history, SpectralStat stat,
    int source, int target, const SurrogateScheme& scheme_in, int n_freqs = 512,
    double ggc_corr_threshold = 0.1) {
  if (scheme_in.kind == SurrogateKind::TrialShuffle && series.n_trials() < 2)
    throw Error(ErrorCode::TooFewTrialsForShuffle,
                "trial-shuffle surrogates need at least two trials");
  SurrogateScheme scheme = scheme_in;
  if (scheme.kind == SurrogateKind::CircularShift)
    scheme.min_shift = std::max(
        scheme.min_shift,
        history.order * history.lag_step + history.delay + 1);
  std::vector<int> channels{target, source};
  // positions inside the refitted bivariate model: target = 0, source = 1
  spectral_statistic_values(series, channels, history, stat, 1, 0, 2,
                            ggc_corr_threshold);  // observed admissibility
  auto statistic = [&](const TimeSeriesSet& s) {
    return spectral_statistic_values(s, channels, history, stat, 1, 0, n_freqs,
                                     2.0);
  };
  auto samples = surrogate_pvalues(statistic, series, source, scheme);
  SpectralCausalityResult r;
  r.direction = {source, target, {}};
  r.kind = stat;
  r.freqs = Eigen::VectorXd::LinSpaced(n_freqs, 0.0, 0.5);
  r.values = samples.observed;
  r.p_values = samples.p_values;
  return r;
}

}  // namespace grangerlab

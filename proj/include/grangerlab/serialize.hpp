#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "grangerlab/gc_time.hpp"
#include "grangerlab/simulation.hpp"
#include "grangerlab/spectral.hpp"
#include "grangerlab/time_series.hpp"
#include "grangerlab/transfer_entropy.hpp"
#include "grangerlab/tv_var.hpp"
#include "grangerlab/var.hpp"

// JSON bindings for the result and model schemas. nlohmann/json emits
// shortest round-trip representations for doubles, so serialize -> parse is
// lossless for every numeric field.

namespace grangerlab {

using json = nlohmann::json;

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  if (j.empty()) return {};
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

inline json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const HistorySpec& h) {
  return {{"order", h.order}, {"delay", h.delay}, {"lag_step", h.lag_step}};
}

inline HistorySpec history_from_json(const json& j) {
  HistorySpec h;
  h.order = j.value("order", 1);
  h.delay = j.value("delay", 0);
  h.lag_step = j.value("lag_step", 1);
  return h;
}

inline json to_json(const VarModel& m) {
  json coeffs = json::array();
  for (const auto& c : m.coeffs) {
    json flat = json::array();  // row-major per lag
    for (Eigen::Index r = 0; r < c.rows(); ++r)
      for (Eigen::Index col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
    coeffs.push_back(std::move(flat));
  }
  json j{{"order", m.order},
         {"dim", m.dim},
         {"coeffs", std::move(coeffs)},
         {"noise_cov", to_json(m.noise_cov)},
         {"n_obs", m.n_obs},
         {"history", to_json(m.history)}};
  j["noise_cov_ml"] = to_json(m.noise_cov_ml);
  if (!m.channel_names.empty()) j["channel_names"] = m.channel_names;
  if (m.intercept.size() && m.intercept.cwiseAbs().maxCoeff() > 0.0)
    j["intercept"] = to_json(m.intercept);
  return j;
}

inline VarModel var_model_from_json(const json& j) {
  VarModel m;
  m.order = j.at("order").get<int>();
  m.dim = j.at("dim").get<int>();
  for (const auto& flat : j.at("coeffs")) {
    Eigen::MatrixXd c(m.dim, m.dim);
    for (int r = 0; r < m.dim; ++r)
      for (int col = 0; col < m.dim; ++col)
        c(r, col) = flat[r * m.dim + col].get<double>();
    m.coeffs.push_back(std::move(c));
  }
  m.noise_cov = matrix_from_json(j.at("noise_cov"));
  m.noise_cov_ml = j.contains("noise_cov_ml")
                       ? matrix_from_json(j["noise_cov_ml"])
                       : m.noise_cov;
  m.n_obs = j.value("n_obs", 0L);
  if (j.contains("history")) m.history = history_from_json(j["history"]);
  if (j.contains("channel_names"))
    m.channel_names = j["channel_names"].get<std::vector<std::string>>();
  m.intercept = Eigen::VectorXd::Zero(m.dim);
  if (j.contains("intercept"))
    for (int i = 0; i < m.dim; ++i) m.intercept(i) = j["intercept"][i].get<double>();
  return m;
}

inline json to_json(const Direction& d) {
  return {{"source", d.source},
          {"target", d.target},
          {"conditioning", d.conditioning}};
}

inline json to_json(const GcTimeResult& r) {
  json j{{"kind", "gc-time"},
         {"direction", to_json(r.direction)},
         {"n_obs", r.n_obs}};
  if (std::isfinite(r.f_stat) || std::isfinite(r.f_geweke)) {
    j["f_geweke"] = r.f_geweke;
    j["f_stat"] = r.f_stat;
    j["f_df"] = {r.f_df1, r.f_df2};
    j["f_pvalue"] = r.f_pvalue;
    j["restricted_var"] = r.restricted_var;
    j["unrestricted_var"] = r.unrestricted_var;
  }
  if (std::isfinite(r.wald_stat)) {
    j["wald_stat"] = r.wald_stat;
    j["wald_df"] = r.wald_df;
    j["wald_pvalue"] = r.wald_pvalue;
  }
  return j;
}

inline json to_json(const SpectralCausalityResult& r, double sampling_rate) {
  json points = json::array();
  for (int i = 0; i < r.freqs.size(); ++i) {
    json pt{{"freq_hz", r.freqs(i) * sampling_rate}, {"value", r.values(i)}};
    if (r.kind == SpectralStat::Ggc) pt["value_ratio"] = std::exp(r.values(i));
    if (r.p_values) pt["p_value"] = (*r.p_values)(i);
    points.push_back(std::move(pt));
  }
  json j{{"kind", spectral_stat_name(r.kind)},
         {"direction", to_json(r.direction)},
         {"points", std::move(points)}};
  if (r.df1 > 0.0) j["df"] = {r.df1, r.df2};
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

inline json to_json(const TeEstimate& e) {
  json j{{"kind", "transfer-entropy"},
         {"value", e.value},
         {"estimator", e.estimator == TeEstimator::Gaussian ? "gaussian" : "kernel"},
         {"history", to_json(e.history)},
         {"n_points", e.n_points}};
  if (e.estimator == TeEstimator::Kernel) {
    j["bandwidth"] = e.bandwidth;
    j["zero_density_count"] = e.zero_density_count;
  }
  if (e.p_value) j["p_value"] = *e.p_value;
  if (e.local_values) j["local_mean"] = e.local_values->mean();
  return j;
}

inline json to_json(const GeneratorSpec& s) {
  json coeffs = json::array();
  for (const auto& c : s.base_coeffs) {
    json flat = json::array();
    for (Eigen::Index r = 0; r < c.rows(); ++r)
      for (Eigen::Index col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
    coeffs.push_back(std::move(flat));
  }
  json j{{"name", s.name},
         {"kind", schedule_kind_name(s.kind)},
         {"dim", s.dim},
         {"order", s.order},
         {"coeffs", std::move(coeffs)},
         {"noise_cov", to_json(s.noise_cov)},
         {"T", s.T},
         {"K", s.K},
         {"seed", s.seed},
         {"burn_in", s.burn_in},
         {"channel_names", s.channel_names}};
  if (s.time_varying()) {
    j["varying"] = {{"target", s.vary_target},
                    {"source", s.vary_source},
                    {"lag", s.vary_lag},
                    {"low", s.vary_low},
                    {"high", s.vary_high}};
    json schedule = json::array();
    for (int t = 0; t < s.T; ++t) schedule.push_back(s.vary_value(t));
    j["schedule"] = std::move(schedule);
  }
  return j;
}

inline json to_json(const StationarityReport& r) {
  json j{{"kind", "stationarity-screen"},
         {"segment_means", to_json(r.segment_means)},
         {"segment_variances", to_json(r.segment_variances)},
         {"variance_ratio", to_json(r.variance_ratio)},
         {"threshold", r.threshold},
         {"flagged", r.any_flagged}};
  j["channel_flagged"] = r.channel_flagged;
  return j;
}

inline json to_json(const WhitenessReport& r) {
  return {{"kind", "residual-whiteness"},
          {"statistic", to_json(r.statistic)},
          {"p_value", to_json(r.p_value)},
          {"df", r.df},
          {"max_lag", r.max_lag}};
}

inline json trajectory_to_json(const TvVarTrajectory& traj) {
  json states = json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < traj.states[i].size(); ++c)
      row.push_back(traj.states[i](c));
    states.push_back(std::move(row));
  }
  return {{"kind", "tv-var-trajectory"},
          {"method", tv_method_name(traj.method)},
          {"dim", traj.dim},
          {"order", traj.order},
          {"times", traj.times},
          {"states", std::move(states)},
          {"divergence_flagged", traj.divergence_flagged}};
}

}  // namespace grangerlab

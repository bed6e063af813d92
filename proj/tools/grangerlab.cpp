// grangerlab command-line front end: reproducible Granger-causality analyses
// over CSV inputs, with JSON results on stdout or disk.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "grangerlab/grangerlab.hpp"

using grangerlab::json;

namespace {

constexpr const char* kResultVersion = "1";

struct CliOptions {
  std::vector<std::string> inputs;
  double rate = 1.0;
  std::string demean = "trial";
  bool detrend = false;
  int order = 1;
  int delay = 0;
  int lag_step = 1;
  int auto_order = 0;  // >0: select order up to this bound
  std::string criterion = "bic";
  std::uint64_t seed = 1;
  std::string output;

  std::string source, target;
  std::vector<std::string> condition;

  // validate
  int segments = 4;
  // fit-var
  std::vector<std::string> channels;
  std::string model_out;
  int whiteness_lag = 0;
  // gc-spectral
  std::string stat = "ggc";
  int n_freqs = 512;
  std::string model_in;
  bool pointwise_f = false;
  int n_surrogates = 0;
  std::string scheme = "circular-shift";
  int block_len = 0;
  std::string plot_data;
  double corr_threshold = 0.1;
  // te
  std::string estimator = "gaussian";
  double bandwidth = 0.0;
  int n_perm = 0;
  bool local = false;
  std::string local_out;
  // gc-tv
  std::string method = "kalman";
  int window_len = 0;
  int window_step = 0;
  double uc = 0.01;
  std::string r_variant = "schack";
  std::string q_variant = "isaksson";
  bool smooth = false;
  int n_basis = 8;
  std::string basis = "spline";
  int em_iters = 30;
  std::string trajectory_out;
  std::string tv_stat = "wald";
  // simulate
  std::string scenario;
  int sim_T = 0;
  int sim_K = 0;
  std::string out_prefix = "sim";
  std::string truth_out;
  bool list_scenarios = false;
  // significance
  std::string correction = "none";
  std::string null_out;
};

void require_direction(const CliOptions& o) {
  if (o.source.empty() || o.target.empty())
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "--source and --target are required (flags or "
                            "config file)");
}

grangerlab::HistorySpec history_of(const CliOptions& o) {
  grangerlab::HistorySpec h;
  h.order = o.order;
  h.delay = o.delay;
  h.lag_step = o.lag_step;
  h.check();
  return h;
}

json config_echo(const CliOptions& o, const std::string& subcommand) {
  json j{{"subcommand", subcommand},
         {"inputs", o.inputs},
         {"sampling_rate", o.rate},
         {"demean", o.demean},
         {"detrend", o.detrend},
         {"history", {{"order", o.order}, {"delay", o.delay},
                      {"lag_step", o.lag_step}}},
         {"auto_order", o.auto_order},
         {"criterion", o.criterion},
         {"seed", o.seed}};
  if (!o.source.empty()) j["source"] = o.source;
  if (!o.target.empty()) j["target"] = o.target;
  if (!o.condition.empty()) j["condition"] = o.condition;
  return j;
}

grangerlab::TimeSeriesSet load_series(CliOptions& o, json& warnings) {
  if (o.inputs.empty())
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "no input files given (use --input)");
  for (const auto& path : o.inputs) {
    std::ifstream probe(path);
    if (!probe)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot open input file " + path);
  }
  auto series = grangerlab::read_timeseries(o.inputs, o.rate);
  if (o.detrend) series = grangerlab::detrend(series);
  if (o.demean == "trial")
    series = grangerlab::demean(series, grangerlab::DemeanScope::PerTrial);
  else if (o.demean == "pooled")
    series = grangerlab::demean(series, grangerlab::DemeanScope::Pooled);
  else if (o.demean != "none")
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "demean must be trial, pooled, or none");
  (void)warnings;
  return series;
}

int resolve_channel(const grangerlab::TimeSeriesSet& series,
                    const std::string& label) {
  for (std::size_t i = 0; i < series.channel_names.size(); ++i)
    if (series.channel_names[i] == label) return static_cast<int>(i);
  try {
    std::size_t pos = 0;
    int idx = std::stoi(label, &pos);
    if (pos == label.size() && idx >= 0 && idx < series.n_channels())
      return idx;
  } catch (...) {
  }
  throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                          "unknown channel '" + label + "'");
}

std::vector<int> resolve_channels(const grangerlab::TimeSeriesSet& series,
                                  const std::vector<std::string>& labels) {
  if (labels.empty()) return grangerlab::all_channels(series);
  std::vector<int> out;
  for (const auto& l : labels) out.push_back(resolve_channel(series, l));
  return out;
}

/// Auto order selection when requested; otherwise the configured order.
void apply_order_selection(CliOptions& o, const grangerlab::TimeSeriesSet& series,
                           const std::vector<int>& channels, json& extra) {
  if (o.auto_order <= 0) return;
  grangerlab::HistorySpec base;
  base.delay = o.delay;
  base.lag_step = o.lag_step;
  auto criterion = o.criterion == "aic" ? grangerlab::OrderCriterion::Aic
                                        : grangerlab::OrderCriterion::Bic;
  o.order =
      grangerlab::select_order(series, channels, o.auto_order, criterion, base);
  extra["selected_order"] = o.order;
}

grangerlab::SurrogateScheme scheme_of(const CliOptions& o,
                                      const grangerlab::HistorySpec& h,
                                      int n_surrogates) {
  grangerlab::SurrogateScheme s;
  if (o.scheme == "trial-shuffle")
    s.kind = grangerlab::SurrogateKind::TrialShuffle;
  else if (o.scheme == "circular-shift")
    s.kind = grangerlab::SurrogateKind::CircularShift;
  else if (o.scheme == "block-permutation")
    s.kind = grangerlab::SurrogateKind::BlockPermutation;
  else
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "unknown surrogate scheme: " + o.scheme);
  s.n_surrogates = n_surrogates;
  s.seed = grangerlab::derive_seed(o.seed, "significance");
  s.block_len = o.block_len > 0 ? o.block_len : 10 * h.order;
  s.min_shift = h.order * h.lag_step + h.delay + 1;
  return s;
}

void write_plot_csv(const std::string& path,
                    const grangerlab::SpectralCausalityResult& r,
                    double rate) {
  std::ofstream out(path);
  if (!out)
    throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                            "cannot write " + path);
  out << "freq_hz,value";
  if (r.p_values) out << ",p_value";
  out << "\n";
  for (int i = 0; i < r.freqs.size(); ++i) {
    out << grangerlab::detail::format_double(r.freqs(i) * rate) << ","
        << grangerlab::detail::format_double(r.values(i));
    if (r.p_values)
      out << "," << grangerlab::detail::format_double((*r.p_values)(i));
    out << "\n";
  }
}

void write_trajectory_csv(const std::string& path,
                          const grangerlab::TvVarTrajectory& traj) {
  std::ofstream out(path);
  if (!out)
    throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                            "cannot write " + path);
  out << "time";
  for (int l = 0; l < traj.dim; ++l)
    for (int j = 0; j < traj.order; ++j)
      for (int m = 0; m < traj.dim; ++m)
        out << ",theta_" << (l + 1) << "_" << (m + 1) << "_lag" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << traj.times[i];
    for (Eigen::Index c = 0; c < traj.states[i].size(); ++c)
      out << "," << grangerlab::detail::format_double(traj.states[i](c));
    out << "\n";
  }
}

void write_time_freq_csv(const std::string& path,
                         const grangerlab::TvCausalityResult& r, double rate) {
  std::ofstream out(path);
  if (!out)
    throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                            "cannot write " + path);
  out << "time,freq_hz,value\n";
  for (std::size_t i = 0; i < r.times.size(); ++i)
    for (int f = 0; f < r.freqs.size(); ++f)
      out << r.times[i] << ","
          << grangerlab::detail::format_double(r.freqs(f) * rate) << ","
          << grangerlab::detail::format_double(r.time_freq_values(i, f))
          << "\n";
}

void emit(const CliOptions& o, json& envelope) {
  const std::string text = envelope.dump(2) + "\n";
  if (o.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(o.output);
  if (!out)
    throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                            "cannot write " + o.output);
  out << text;
}

int run_validate(CliOptions& o) {
  json warnings = json::array();
  auto series = load_series(o, warnings);
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "validate")},
                {"results", json::array()},
                {"warnings", warnings}};
  json summary{{"kind", "validate"},
               {"n_trials", series.n_trials()},
               {"n_samples", series.n_samples()},
               {"n_channels", series.n_channels()},
               {"channel_names", series.channel_names}};
  envelope["results"].push_back(summary);
  if (series.n_samples() / std::max(o.segments, 2) >= 20) {
    auto rep = grangerlab::stationarity_screen(series, o.segments);
    envelope["results"].push_back(grangerlab::to_json(rep));
    if (rep.any_flagged)
      envelope["warnings"].push_back(
          "stationarity screen flagged at least one channel (advisory)");
  }
  emit(o, envelope);
  return 0;
}

int run_fit_var(CliOptions& o) {
  json warnings = json::array();
  auto series = load_series(o, warnings);
  auto channels = resolve_channels(series, o.channels);
  json extra;
  apply_order_selection(o, series, channels, extra);
  auto h = history_of(o);
  auto fit = grangerlab::fit_var(series, channels, h);
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "fit-var")},
                {"results", json::array()},
                {"warnings", warnings}};
  json model_json = grangerlab::to_json(fit.model);
  if (!extra.is_null()) model_json["selection"] = extra;
  model_json["kind"] = "var-model";
  model_json["aic"] = fit.diagnostics.aic;
  model_json["bic"] = fit.diagnostics.bic;
  model_json["log_likelihood"] = fit.diagnostics.log_likelihood;
  envelope["results"].push_back(model_json);
  if (o.whiteness_lag > 0) {
    auto rep = grangerlab::residual_whiteness(fit.diagnostics, o.whiteness_lag);
    envelope["results"].push_back(grangerlab::to_json(rep));
  }
  if (!o.model_out.empty()) {
    std::ofstream out(o.model_out);
    if (!out)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot write " + o.model_out);
    out << grangerlab::to_json(fit.model).dump(2) << "\n";
  }
  emit(o, envelope);
  return 0;
}

int run_gc_time(CliOptions& o) {
  require_direction(o);
  json warnings = json::array();
  auto series = load_series(o, warnings);
  const int source = resolve_channel(series, o.source);
  const int target = resolve_channel(series, o.target);
  std::vector<int> conditioning;
  for (const auto& c : o.condition)
    conditioning.push_back(resolve_channel(series, c));
  std::vector<int> involved{target, source};
  involved.insert(involved.end(), conditioning.begin(), conditioning.end());
  json extra;
  apply_order_selection(o, series, involved, extra);
  auto h = history_of(o);
  auto res = grangerlab::granger_tests(series, source, target, h, conditioning);
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "gc-time")},
                {"results", json::array()},
                {"warnings", warnings}};
  json rj = grangerlab::to_json(res);
  if (!extra.is_null()) rj["selection"] = extra;
  envelope["results"].push_back(rj);
  emit(o, envelope);
  return 0;
}

grangerlab::SpectralStat stat_of(const std::string& name) {
  if (name == "ggc") return grangerlab::SpectralStat::Ggc;
  if (name == "dtf") return grangerlab::SpectralStat::Dtf;
  if (name == "pdc") return grangerlab::SpectralStat::Pdc;
  throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                          "unknown spectral statistic: " + name);
}

int run_gc_spectral(CliOptions& o) {
  json warnings = json::array();
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "gc-spectral")},
                {"results", json::array()},
                {"warnings", warnings}};
  const auto stat = stat_of(o.stat);

  grangerlab::VarModel model;
  std::optional<grangerlab::TimeSeriesSet> series;
  int source = 1, target = 0;
  double rate = o.rate;
  if (!o.model_in.empty()) {
    std::ifstream in(o.model_in);
    if (!in)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot open model file " + o.model_in);
    model = grangerlab::var_model_from_json(json::parse(in));
    if (!o.source.empty()) source = std::stoi(o.source);
    if (!o.target.empty()) target = std::stoi(o.target);
  } else {
    series = load_series(o, envelope["warnings"]);
    source = resolve_channel(*series, o.source);
    target = resolve_channel(*series, o.target);
    std::vector<int> involved{target, source};
    json extra;
    apply_order_selection(o, *series, involved, extra);
    if (!extra.is_null()) envelope["config"]["selection"] = extra;
    auto fit = grangerlab::fit_var(*series, grangerlab::all_channels(*series),
                                   history_of(o));
    model = fit.model;
  }

  auto decomp = grangerlab::spectral_decompose(model, o.n_freqs);
  grangerlab::SpectralCausalityResult result;
  switch (stat) {
    case grangerlab::SpectralStat::Ggc:
      result = grangerlab::geweke_spectral_gc(decomp, source, target,
                                              o.corr_threshold);
      if (o.pointwise_f) result = grangerlab::spectral_gc_f_test(result, model);
      break;
    case grangerlab::SpectralStat::Dtf:
      result = grangerlab::dtf(decomp, source, target);
      break;
    case grangerlab::SpectralStat::Pdc:
      result = grangerlab::pdc(decomp, source, target);
      break;
  }
  if (o.n_surrogates > 0) {
    if (!series)
      throw grangerlab::Error(
          grangerlab::ErrorCode::BadConfig,
          "surrogate significance needs raw input data, not a model file");
    auto h = history_of(o);
    auto scheme = scheme_of(o, h, o.n_surrogates);
    auto surro = grangerlab::spectral_significance_surrogate(
        *series, h, stat, source, target, scheme, o.n_freqs, o.corr_threshold);
    result.p_values = surro.p_values;
  }
  for (const auto& w : result.warnings) envelope["warnings"].push_back(w);
  envelope["results"].push_back(grangerlab::to_json(result, rate));
  if (!o.plot_data.empty()) write_plot_csv(o.plot_data, result, rate);
  emit(o, envelope);
  return 0;
}

int run_te(CliOptions& o) {
  require_direction(o);
  json warnings = json::array();
  auto series = load_series(o, warnings);
  const int source = resolve_channel(series, o.source);
  const int target = resolve_channel(series, o.target);
  auto h = history_of(o);
  const auto estimator = o.estimator == "kernel"
                             ? grangerlab::TeEstimator::Kernel
                             : grangerlab::TeEstimator::Gaussian;
  grangerlab::TeEstimate est;
  if (o.local) {
    est = grangerlab::te_local(series, source, target, h, estimator,
                               o.bandwidth);
  } else if (o.n_perm > 0) {
    est = grangerlab::te_permutation_test(
        series, source, target, h, estimator, o.n_perm,
        grangerlab::derive_seed(o.seed, "significance"), o.bandwidth);
  } else if (estimator == grangerlab::TeEstimator::Kernel) {
    est = grangerlab::te_kernel(series, source, target, h, o.bandwidth);
  } else {
    est = grangerlab::te_gaussian(series, source, target, h);
  }
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "te")},
                {"results", json::array()},
                {"warnings", warnings}};
  envelope["results"].push_back(grangerlab::to_json(est));
  if (!o.local_out.empty() && est.local_values) {
    std::ofstream out(o.local_out);
    if (!out)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot write " + o.local_out);
    out << "row,time,local_te\n";
    for (Eigen::Index i = 0; i < est.local_values->size(); ++i) {
      out << i << "," << est.local_times[i] << ","
          << grangerlab::detail::format_double((*est.local_values)(i)) << "\n";
    }
  }
  emit(o, envelope);
  return 0;
}

int run_gc_tv(CliOptions& o) {
  require_direction(o);
  json warnings = json::array();
  auto series = load_series(o, warnings);
  const int source = resolve_channel(series, o.source);
  const int target = resolve_channel(series, o.target);
  auto channels = resolve_channels(series, o.channels);
  json extra;
  apply_order_selection(o, series, channels, extra);
  auto h = history_of(o);
  const int d = static_cast<int>(channels.size());

  grangerlab::TvVarTrajectory traj;
  if (o.method == "window") {
    int wl = o.window_len > 0 ? o.window_len
                              : std::max(10 * d * h.order, 100);
    int step = o.window_step > 0 ? o.window_step : std::max(wl / 4, 1);
    traj = grangerlab::tv_var_window(series, channels, h, wl, step);
  } else if (o.method == "kalman") {
    grangerlab::KalmanConfig cfg;
    cfg.uc = o.uc;
    if (o.r_variant == "schack")
      cfg.r_variant = grangerlab::RVariant::Schack;
    else if (o.r_variant == "milde-multitrial")
      cfg.r_variant = grangerlab::RVariant::MildeMultitrial;
    else if (o.r_variant == "constant-1")
      cfg.r_variant = grangerlab::RVariant::Constant1;
    else if (o.r_variant == "constant-1-minus-uc")
      cfg.r_variant = grangerlab::RVariant::Constant1MinusUc;
    else if (o.r_variant == "jazwinski")
      cfg.r_variant = grangerlab::RVariant::Jazwinski;
    else if (o.r_variant == "penny")
      cfg.r_variant = grangerlab::RVariant::Penny;
    else if (o.r_variant == "zero")
      cfg.r_variant = grangerlab::RVariant::Zero;
    else
      throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                              "unknown R variant: " + o.r_variant);
    if (o.q_variant == "isaksson")
      cfg.q_variant = grangerlab::QVariant::Isaksson;
    else if (o.q_variant == "akay-haykin")
      cfg.q_variant = grangerlab::QVariant::AkayHaykin;
    else if (o.q_variant == "jazwinski-penny")
      cfg.q_variant = grangerlab::QVariant::JazwinskiPenny;
    else if (o.q_variant == "zero")
      cfg.q_variant = grangerlab::QVariant::Zero;
    else
      throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                              "unknown Q variant: " + o.q_variant);
    traj = grangerlab::tv_var_kalman(series, channels, h, cfg, o.smooth);
  } else if (o.method == "lms" || o.method == "rls") {
    traj = grangerlab::tv_var_adaptive(
        series, channels, h,
        o.method == "lms" ? grangerlab::TvMethod::Lms
                          : grangerlab::TvMethod::Rls,
        o.uc);
  } else if (o.method == "em") {
    auto em = grangerlab::kalman_em(series, channels, h, o.em_iters);
    traj = em.trajectory;
    extra["em_log_likelihood_first"] = em.log_likelihood.front();
    extra["em_log_likelihood_last"] = em.log_likelihood.back();
  } else if (o.method == "basis") {
    auto basis = o.basis == "haar" ? grangerlab::BasisKind::WaveletLike
                                   : grangerlab::BasisKind::Spline;
    traj = grangerlab::tv_var_basis(series, channels, h, o.n_basis, basis);
  } else {
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "unknown tv method: " + o.method);
  }
  if (traj.divergence_flagged)
    warnings.push_back("adaptive recursion flagged high innovation energy");

  // positions of source/target within the fitted channel subset
  auto position_of = [&](int channel) {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i] == channel) return static_cast<int>(i);
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            "source/target not in the fitted channel subset");
  };
  const int src_pos = position_of(source);
  const int tgt_pos = position_of(target);

  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "gc-tv")},
                {"results", json::array()},
                {"warnings", warnings}};
  envelope["config"]["method"] = o.method;
  if (!extra.is_null()) envelope["config"]["method_detail"] = extra;

  json traj_json = grangerlab::trajectory_to_json(traj);
  envelope["results"].push_back(traj_json);

  if (o.tv_stat == "wald") {
    auto wald =
        grangerlab::tv_causality(traj, grangerlab::TvStat::Wald, src_pos,
                                 tgt_pos);
    json wj{{"kind", "tv-wald"},
            {"direction", grangerlab::to_json(wald.direction)},
            {"times", wald.times},
            {"df", wald.df}};
    json vals = json::array(), pvals = json::array();
    for (Eigen::Index i = 0; i < wald.values.size(); ++i) {
      vals.push_back(wald.values(i));
      pvals.push_back(wald.p_values(i));
    }
    wj["values"] = std::move(vals);
    wj["p_values"] = std::move(pvals);
    envelope["results"].push_back(wj);
  } else {
    auto kind = o.tv_stat == "ggc"   ? grangerlab::TvStat::SpectralGgc
                : o.tv_stat == "dtf" ? grangerlab::TvStat::Dtf
                : o.tv_stat == "pdc" ? grangerlab::TvStat::Pdc
                                     : grangerlab::TvStat::Wald;
    if (kind == grangerlab::TvStat::Wald)
      throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                              "unknown tv statistic: " + o.tv_stat);
    auto map =
        grangerlab::tv_causality(traj, kind, src_pos, tgt_pos, o.n_freqs);
    json mj{{"kind", std::string("tv-") + o.tv_stat},
            {"direction", grangerlab::to_json(map.direction)},
            {"n_times", static_cast<long>(map.times.size())},
            {"n_freqs", map.freqs.size()}};
    envelope["results"].push_back(mj);
    if (!o.plot_data.empty()) write_time_freq_csv(o.plot_data, map, o.rate);
  }
  if (!o.trajectory_out.empty()) write_trajectory_csv(o.trajectory_out, traj);
  emit(o, envelope);
  return 0;
}

int run_simulate(CliOptions& o) {
  if (o.list_scenarios) {
    json envelope{{"version", kResultVersion},
                  {"config", {{"subcommand", "simulate"}}},
                  {"results", json::array()},
                  {"warnings", json::array()}};
    for (const auto& s : grangerlab::builtin_scenarios()) {
      envelope["results"].push_back(
          {{"name", s.name},
           {"kind", grangerlab::schedule_kind_name(s.kind)},
           {"dim", s.dim},
           {"T", s.T},
           {"K", s.K}});
    }
    emit(o, envelope);
    return 0;
  }
  auto spec = grangerlab::find_scenario(o.scenario);
  if (o.sim_T > 0) spec.T = o.sim_T;
  if (o.sim_K > 0) spec.K = o.sim_K;
  spec.seed = o.seed;
  auto series = grangerlab::simulate(spec);
  auto paths = grangerlab::write_timeseries_csv(o.out_prefix, series);
  const std::string truth_path =
      o.truth_out.empty() ? o.out_prefix + "_truth.json" : o.truth_out;
  {
    std::ofstream out(truth_path);
    if (!out)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot write " + truth_path);
    out << grangerlab::to_json(spec).dump(2) << "\n";
  }
  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "simulate")},
                {"results", json::array()},
                {"warnings", json::array()}};
  envelope["config"]["scenario"] = o.scenario;
  envelope["results"].push_back({{"kind", "simulate"},
                                 {"files", paths},
                                 {"truth", truth_path},
                                 {"T", spec.T},
                                 {"K", spec.K}});
  emit(o, envelope);
  return 0;
}

int run_significance(CliOptions& o) {
  require_direction(o);
  json warnings = json::array();
  auto series = load_series(o, warnings);
  const int source = resolve_channel(series, o.source);
  const int target = resolve_channel(series, o.target);
  auto h = history_of(o);
  const int n_surr = o.n_surrogates > 0 ? o.n_surrogates : 199;
  auto scheme = scheme_of(o, h, n_surr);

  json envelope{{"version", kResultVersion},
                {"config", config_echo(o, "significance")},
                {"results", json::array()},
                {"warnings", warnings}};
  envelope["config"]["stat"] = o.stat;
  envelope["config"]["scheme"] = o.scheme;
  envelope["config"]["n_surrogates"] = n_surr;

  std::vector<double> p_values;
  json result;
  Eigen::VectorXd null_samples;
  if (o.stat == "f" || o.stat == "wald" || o.stat == "te-gaussian" ||
      o.stat == "te-kernel") {
    auto statistic = [&](const grangerlab::TimeSeriesSet& s) -> double {
      if (o.stat == "f")
        return grangerlab::granger_f_test(s, source, target, h).f_stat;
      if (o.stat == "wald")
        return grangerlab::granger_wald_test(s, source, target, h).wald_stat;
      if (o.stat == "te-gaussian")
        return grangerlab::te_gaussian(s, source, target, h).value;
      return grangerlab::te_kernel(s, source, target, h, o.bandwidth).value;
    };
    auto [p, nulls] =
        grangerlab::surrogate_pvalue(statistic, series, source, scheme);
    p_values = {p};
    null_samples = nulls;
    result = {{"kind", "significance"},
              {"stat", o.stat},
              {"observed", statistic(series)},
              {"p_value", p}};
  } else {
    auto res = grangerlab::spectral_significance_surrogate(
        series, h, stat_of(o.stat), source, target, scheme, o.n_freqs,
        o.corr_threshold);
    for (int i = 0; i < res.p_values->size(); ++i)
      p_values.push_back((*res.p_values)(i));
    result = grangerlab::to_json(res, o.rate);
    result["kind"] = "significance-spectral";
    result["stat"] = o.stat;
  }
  if (o.correction != "none") {
    auto method = o.correction == "bonferroni"
                      ? grangerlab::MultiplicityMethod::Bonferroni
                      : grangerlab::MultiplicityMethod::BenjaminiHochberg;
    result["p_values_adjusted"] = grangerlab::correct_multiplicity(p_values,
                                                                   method);
    result["correction"] = o.correction;
  }
  envelope["results"].push_back(result);
  if (!o.null_out.empty() && null_samples.size() > 0) {
    std::ofstream out(o.null_out);
    if (!out)
      throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                              "cannot write " + o.null_out);
    out << "null_value\n";
    for (Eigen::Index i = 0; i < null_samples.size(); ++i)
      out << grangerlab::detail::format_double(null_samples(i)) << "\n";
  }
  emit(o, envelope);
  return 0;
}

/// Fill unset CLI options from a JSON config file (flags take precedence).
void merge_config_file(CLI::App& app, CliOptions& o, const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw grangerlab::Error(grangerlab::ErrorCode::IoFailure,
                            "cannot open config file " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw grangerlab::Error(grangerlab::ErrorCode::BadConfig,
                            std::string("config parse failure: ") + e.what());
  }
  CLI::App* sub = app.get_subcommands().empty() ? nullptr
                                                : app.get_subcommands()[0];
  auto unset = [&](const std::string& flag) {
    auto* opt = app.get_option_no_throw(flag);
    if (opt && opt->count() > 0) return false;
    if (sub) {
      auto* sopt = sub->get_option_no_throw(flag);
      if (sopt && sopt->count() > 0) return false;
    }
    return true;
  };
  if (cfg.contains("inputs") && o.inputs.empty())
    o.inputs = cfg["inputs"].get<std::vector<std::string>>();
  if (cfg.contains("sampling_rate") && unset("--rate"))
    o.rate = cfg["sampling_rate"].get<double>();
  if (cfg.contains("demean") && unset("--demean"))
    o.demean = cfg["demean"].get<std::string>();
  if (cfg.contains("seed") && unset("--seed"))
    o.seed = cfg["seed"].get<std::uint64_t>();
  if (cfg.contains("history")) {
    const auto& h = cfg["history"];
    if (h.contains("order") && unset("--order")) o.order = h["order"];
    if (h.contains("delay") && unset("--delay")) o.delay = h["delay"];
    if (h.contains("lag_step") && unset("--lag-step"))
      o.lag_step = h["lag_step"];
  }
  if (cfg.contains("source") && unset("--source"))
    o.source = cfg["source"].get<std::string>();
  if (cfg.contains("target") && unset("--target"))
    o.target = cfg["target"].get<std::string>();
  if (cfg.contains("n_freqs") && unset("--nfreq"))
    o.n_freqs = cfg["n_freqs"].get<int>();
  if (cfg.contains("stat") && unset("--stat"))
    o.stat = cfg["stat"].get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
  CliOptions o;
  CLI::App app{"Granger-causality statistics in the time domain, the "
               "frequency domain, and time-varying settings"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;

  app.add_option("--config", config_path, "JSON config file; flags override");
  app.add_option("--input", o.inputs, "input CSV file(s), one per trial or a "
                                      "single file with a trial column");
  app.add_option("--rate", o.rate, "sampling rate in Hz");
  app.add_option("--demean", o.demean, "trial | pooled | none");
  app.add_flag("--detrend", o.detrend, "remove per-trial linear trends");
  app.add_option("--order,-p", o.order, "model order p");
  app.add_option("--delay", o.delay, "history delay (samples)");
  app.add_option("--lag-step", o.lag_step, "history lag step (samples)");
  app.add_option("--auto-order", o.auto_order,
                 "select the order up to this bound");
  app.add_option("--criterion", o.criterion, "aic | bic");
  app.add_option("--seed", o.seed, "master random seed");
  app.add_option("--output,-o", o.output, "result JSON path (default stdout)");

  auto* validate = app.add_subcommand("validate", "check inputs and screen "
                                                  "for nonstationarity");
  validate->add_option("--segments", o.segments, "stationarity segments");

  auto* fit = app.add_subcommand("fit-var", "fit a stationary (V)AR model");
  fit->add_option("--channels", o.channels, "channel subset (names or indices)");
  fit->add_option("--model-out", o.model_out, "write the fitted model JSON");
  fit->add_option("--whiteness-lag", o.whiteness_lag,
                  "residual portmanteau lags");

  auto* gct = app.add_subcommand("gc-time", "time-domain Granger tests");
  gct->add_option("--source", o.source);
  gct->add_option("--target", o.target);
  gct->add_option("--condition", o.condition, "conditioning channels");

  auto* gcs = app.add_subcommand("gc-spectral", "frequency-domain causality");
  gcs->add_option("--source", o.source);
  gcs->add_option("--target", o.target);
  gcs->add_option("--stat", o.stat, "ggc | dtf | pdc");
  gcs->add_option("--nfreq", o.n_freqs, "frequency grid size");
  gcs->add_option("--model", o.model_in, "fitted model JSON instead of data");
  gcs->add_flag("--pointwise-f", o.pointwise_f,
                "attach approximate pointwise F p-values (ggc)");
  gcs->add_option("--surrogates", o.n_surrogates,
                  "pointwise surrogate p-values from this many surrogates");
  gcs->add_option("--scheme", o.scheme,
                  "trial-shuffle | circular-shift | block-permutation");
  gcs->add_option("--block-len", o.block_len, "block length");
  gcs->add_option("--plot-data", o.plot_data, "per-direction CSV for plotting");
  gcs->add_option("--corr-threshold", o.corr_threshold,
                  "innovation-correlation admissibility threshold");

  auto* te = app.add_subcommand("te", "transfer entropy");
  te->add_option("--source", o.source);
  te->add_option("--target", o.target);
  te->add_option("--estimator", o.estimator, "gaussian | kernel");
  te->add_option("--bandwidth", o.bandwidth, "kernel width (0 = automatic)");
  te->add_option("--n-perm", o.n_perm, "permutation significance replicates");
  te->add_flag("--local", o.local, "per-time local transfer entropy");
  te->add_option("--local-out", o.local_out, "local TE CSV path");

  auto* tv = app.add_subcommand("gc-tv", "time-varying VAR and causality");
  tv->add_option("--source", o.source);
  tv->add_option("--target", o.target);
  tv->add_option("--channels", o.channels, "channel subset (default: all)");
  tv->add_option("--method", o.method,
                 "window | kalman | lms | rls | em | basis");
  tv->add_option("--stat", o.tv_stat, "wald | ggc | dtf | pdc");
  tv->add_option("--window-len", o.window_len);
  tv->add_option("--step", o.window_step);
  tv->add_option("--uc", o.uc, "update coefficient in (0,1)");
  tv->add_option("--r-variant", o.r_variant,
                 "schack | milde-multitrial | constant-1 | "
                 "constant-1-minus-uc | jazwinski | penny | zero");
  tv->add_option("--q-variant", o.q_variant,
                 "isaksson | akay-haykin | jazwinski-penny | zero");
  tv->add_flag("--smooth", o.smooth, "fixed-interval smoothing pass");
  tv->add_option("--n-basis", o.n_basis);
  tv->add_option("--basis", o.basis, "spline | haar");
  tv->add_option("--em-iters", o.em_iters);
  tv->add_option("--nfreq", o.n_freqs);
  tv->add_option("--plot-data", o.plot_data, "long-format time-frequency CSV");
  tv->add_option("--trajectory-out", o.trajectory_out,
                 "coefficient trajectory CSV");

  auto* sim = app.add_subcommand("simulate", "generate ground-truth data");
  sim->add_option("--scenario", o.scenario, "builtin scenario name");
  sim->add_option("--T", o.sim_T, "override series length");
  sim->add_option("--K", o.sim_K, "override trial count");
  sim->add_option("--out", o.out_prefix, "output file prefix");
  sim->add_option("--truth-out", o.truth_out, "truth JSON path");
  sim->add_flag("--list", o.list_scenarios, "list builtin scenarios");

  auto* sig = app.add_subcommand("significance",
                                 "surrogate significance for any statistic");
  sig->add_option("--source", o.source);
  sig->add_option("--target", o.target);
  sig->add_option("--stat", o.stat,
                  "f | wald | te-gaussian | te-kernel | ggc | dtf | pdc");
  sig->add_option("--scheme", o.scheme,
                  "trial-shuffle | circular-shift | block-permutation");
  sig->add_option("--n-surrogates", o.n_surrogates);
  sig->add_option("--block-len", o.block_len);
  sig->add_option("--nfreq", o.n_freqs);
  sig->add_option("--bandwidth", o.bandwidth);
  sig->add_option("--corr-threshold", o.corr_threshold);
  sig->add_option("--correct", o.correction, "none | bonferroni | bh");
  sig->add_option("--null-out", o.null_out, "null-sample CSV for QQ plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err{{"error",
              {{"code", "BadConfig"}, {"message", std::string(e.what())}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (!config_path.empty()) merge_config_file(app, o, config_path);
    if (validate->parsed()) return run_validate(o);
    if (fit->parsed()) return run_fit_var(o);
    if (gct->parsed()) return run_gc_time(o);
    if (gcs->parsed()) return run_gc_spectral(o);
    if (te->parsed()) return run_te(o);
    if (tv->parsed()) return run_gc_tv(o);
    if (sim->parsed()) return run_simulate(o);
    if (sig->parsed()) return run_significance(o);
    return 2;
  } catch (const grangerlab::Error& e) {
    json detail = json::object();
    for (const auto& [k, v] : e.detail()) detail[k] = v;
    json err{{"error",
              {{"code", grangerlab::error_code_name(e.code())},
               {"message", e.what()},
               {"detail", detail}}}};
    std::cerr << err.dump() << "\n";
    return e.kind() == grangerlab::ErrorKind::Validation ? 2 : 3;
  } catch (const std::exception& e) {
    json err{{"error", {{"code", "Internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
}

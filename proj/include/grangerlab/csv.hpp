#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grangerlab/errors.hpp"
#include "grangerlab/time_series.hpp"

namespace grangerlab {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string()
                                         : field.substr(a, b - a + 1));
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::IoFailure, "cannot parse number '" + s + "' in " + where);
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Read one trial: header row of channel names, one row per time sample.
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> read_trial_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::EmptyInput, path + " is empty");
  auto names = detail::split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != names.size())
      throw Error(ErrorCode::IoFailure,
                  path + ": row has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(names.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(detail::parse_double(f, path));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(rows.size(), names.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < names.size(); ++c) m(r, c) = rows[r][c];
  return {m, names};
}

/// Load a series from one file per trial, or from a single file whose first
/// column is named `trial` (integer trial labels).
inline TimeSeriesSet read_timeseries(const std::vector<std::string>& paths,
                                     double sampling_rate) {
  if (paths.empty()) throw Error(ErrorCode::EmptyInput, "no input files");
  TimeSeriesSet series;
  series.sampling_rate = sampling_rate;
  if (paths.size() == 1) {
    auto [m, names] = read_trial_csv(paths[0]);
    if (!names.empty() && names[0] == "trial") {
      series.channel_names.assign(names.begin() + 1, names.end());
      std::vector<std::pair<int, Eigen::Index>> order;  // (trial id, row)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        order.emplace_back(static_cast<int>(m(r, 0)), r);
      // rows are expected grouped per trial, in time order
      int current = order.empty() ? 0 : order[0].first;
      std::vector<Eigen::Index> block;
      auto flush = [&]() {
        if (block.empty()) return;
        Eigen::MatrixXd trial(block.size(), m.cols() - 1);
        for (std::size_t i = 0; i < block.size(); ++i)
          trial.row(i) = m.row(block[i]).tail(m.cols() - 1);
        series.trials.push_back(std::move(trial));
        block.clear();
      };
      for (auto& [id, r] : order) {
        if (id != current) {
          flush();
          current = id;
        }
        block.push_back(r);
      }
      flush();
      return validate(series);
    }
    series.channel_names = names;
    series.trials.push_back(m);
    return validate(series);
  }
  for (const auto& path : paths) {
    auto [m, names] = read_trial_csv(path);
    if (series.channel_names.empty())
      series.channel_names = names;
    else if (series.channel_names != names)
      throw Error(ErrorCode::RaggedTrials,
                  "channel names differ between trial files");
    series.trials.push_back(std::move(m));
  }
  return validate(series);
}

inline void write_trial_csv(const std::string& path, const Eigen::MatrixXd& trial,
                            const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  for (std::size_t c = 0; c < names.size(); ++c)
    out << (c ? "," : "") << names[c];
  out << "\n";
  for (Eigen::Index t = 0; t < trial.rows(); ++t) {
    for (Eigen::Index c = 0; c < trial.cols(); ++c)
      out << (c ? "," : "") << detail::format_double(trial(t, c));
    out << "\n";
  }
}

/// Write one CSV per trial: <prefix>_trial<k>.csv; returns the paths.
inline std::vector<std::string> write_timeseries_csv(
    const std::string& prefix, const TimeSeriesSet& series) {
  std::vector<std::string> names = series.channel_names;
  if (names.empty())
    for (int c = 0; c < series.n_channels(); ++c)
      names.push_back("ch" + std::to_string(c + 1));
  std::vector<std::string> paths;
  for (int k = 0; k < series.n_trials(); ++k) {
    std::string path = prefix + "_trial" + std::to_string(k + 1) + ".csv";
    write_trial_csv(path, series.trials[k], names);
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace grangerlab

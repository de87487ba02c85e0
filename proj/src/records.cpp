#include "ccmpc/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ccmpc {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

SolveTimeStats solve_time_stats(std::vector<double> samples) {
  SolveTimeStats s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  auto quantile = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size()))) ;
    return samples[std::min(samples.size() - 1, k == 0 ? 0 : k - 1)];
  };
  s.min_us = samples.front();
  s.median_us = quantile(0.5);
  s.p99_us = quantile(0.99);
  s.max_us = samples.back();
  return s;
}

void write_episode_header(std::ostream& out) {
  out << "schema_version,config_hash,sample,seed,gait,mode,payload,max_plank_height,success,failure_reason,"
         "failure_time,slippage_ratio,tracking_cost,effort_cost,slip_events,peak_height_error,ticks\n";
}

void write_episode_record(std::ostream& out, const std::string& config_hash, const EpisodeRecord& r) {
  const EpisodeMetrics& m = r.metrics;
  out << kRecordSchemaVersion << ',' << config_hash << ',' << r.sample << ',' << r.seed << ',' << r.gait << ','
      << to_string(r.mode) << ',' << format_double(r.payload) << ',' << format_double(r.max_plank_height) << ','
      << (m.success ? 1 : 0) << ',' << to_string(m.failure_reason) << ',' << format_double(m.failure_time) << ','
      << format_double(m.slippage_ratio) << ',' << format_double(m.tracking_cost) << ','
      << format_double(m.effort_cost) << ',' << m.slip_events << ',' << format_double(m.peak_height_error) << ','
      << m.ticks << '\n';
}

void write_timing_header(std::ostream& out) { out << "sample,gait,mode,ticks,solve_us_min,solve_us_median,solve_us_p99\n"; }

void write_timing_record(std::ostream& out, const EpisodeRecord& r) {
  const SolveTimeStats s = solve_time_stats(r.metrics.solve_times_us);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.1f,%.1f,%.1f", s.min_us, s.median_us, s.p99_us);
  out << r.sample << ',' << r.gait << ',' << to_string(r.mode) << ',' << r.metrics.ticks << ',' << buf << '\n';
}

void write_trace(std::ostream& out, const std::vector<TraceRow>& trace) {
  static const char* kState[] = {"roll", "pitch", "yaw", "px", "py", "pz", "wx", "wy", "wz", "vx", "vy", "vz", "g"};
  out << "time";
  for (const char* s : kState) out << ',' << s;
  for (int leg = 0; leg < dims::kLegs; ++leg) {
    for (const char* axis : {"x", "y", "z"}) out << ",f" << leg << axis;
  }
  for (int k = 0; k < dims::kConstraintRows; ++k) out << ",c" << k;
  out << ",contacts,status,iterations\n";
  for (const TraceRow& row : trace) {
    out << format_double(row.time);
    const StateVector<double> x = row.state.flatten();
    for (int i = 0; i < dims::kState; ++i) out << ',' << format_double(x(i));
    for (int i = 0; i < dims::kControl; ++i) out << ',' << format_double(row.command.forces(i));
    for (int i = 0; i < dims::kConstraintRows; ++i) out << ',' << format_double(row.tightening(i));
    out << ',';
    for (bool c : row.contacts) out << (c ? '1' : '0');
    out << ',' << to_string(row.status) << ',' << row.iterations << '\n';
  }
}

void write_summary(std::ostream& out, const std::vector<AggregateRow>& table, const std::vector<std::string>& gaits,
                   const std::vector<ControllerMode>& modes) {
  out << "metric,gait";
  for (ControllerMode m : modes) out << ',' << to_string(m);
  out << ",episodes\n";
  struct Metric {
    const char* name;
    double AggregateRow::*field;
  };
  const Metric metrics[] = {{"success_rate_pct", &AggregateRow::success_rate},
                            {"mean_slippage_ratio", &AggregateRow::mean_slippage},
                            {"normalized_tracking_cost", &AggregateRow::normalized_tracking},
                            {"normalized_effort_cost", &AggregateRow::normalized_effort}};
  for (const Metric& metric : metrics) {
    for (const std::string& gait : gaits) {
      out << metric.name << ',' << gait;
      int episodes = 0;
      for (ControllerMode m : modes) {
        auto it = std::find_if(table.begin(), table.end(),
                               [&](const AggregateRow& r) { return r.gait == gait && r.mode == m; });
        out << ',' << (it == table.end() ? std::string("nan") : format_double((*it).*(metric.field)));
        if (it != table.end()) episodes = it->episodes;
      }
      out << ',' << episodes << '\n';
    }
  }
}

}  // namespace ccmpc

#ifndef CCMPC_RECORDS_HPP
#define CCMPC_RECORDS_HPP

// Delimited output: per-episode records, solve-time statistics, per-tick
// traces and the aggregate metric table. Doubles are written with 17
// significant digits so equal runs give byte-identical files.

#include <ostream>
#include <string>
#include <vector>

#include "ccmpc/simulator.hpp"

namespace ccmpc {

/// Bump when the record columns change.
constexpr int kRecordSchemaVersion = 1;

struct SolveTimeStats {
  double min_us = 0;
  double median_us = 0;
  double p99_us = 0;
  double max_us = 0;
};

SolveTimeStats solve_time_stats(std::vector<double> samples_us);

std::string format_double(double v);

void write_episode_header(std::ostream& out);
void write_episode_record(std::ostream& out, const std::string& config_hash, const EpisodeRecord& record);

/// Wall-clock statistics; kept apart from the reproducible records.
void write_timing_header(std::ostream& out);
void write_timing_record(std::ostream& out, const EpisodeRecord& record);

void write_trace(std::ostream& out, const std::vector<TraceRow>& trace);

/// One row per metric and gait, one column per mode.
void write_summary(std::ostream& out, const std::vector<AggregateRow>& table, const std::vector<std::string>& gaits,
                   const std::vector<ControllerMode>& modes);

}  // namespace ccmpc

#endif  // CCMPC_RECORDS_HPP

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fastpose/tensornet.hpp"

namespace fastpose {

inline constexpr int kDefaultWarmup = 10;
inline constexpr int kDefaultIterations = 200;

struct LatencyRecord {
  std::string label;
  int iterations = 0;
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  std::uint64_t flops = 0;  // MACs + elementwise ops of one forward pass
  std::uint64_t params = 0;
};

// Mean and median (average of the middle pair for even counts) of the
// samples. Throws EmptyInput.
void summarize_samples(LatencyRecord& record);

// Runs `warmup` untimed forwards, then times `iterations` forwards on a
// steady clock. Single-threaded; the graph must not be shared while timing.
// Throws InvalidConfig, ShapeMismatch.
LatencyRecord measure_latency(const LayerGraph& graph, const Shape& input, int iterations = kDefaultIterations,
                              int warmup = kDefaultWarmup, std::string label = "");

struct ParetoInput {
  std::string label;
  double ar = 0.0;
  double latency_ms = 0.0;
};

struct ParetoRow {
  std::string label;
  double ar = 0.0;
  double latency_ms = 0.0;
  bool dominated = false;
};

// Rows sorted by latency ascending (ties by label); a row is dominated when
// another has ar >= and latency <= with at least one strict. Throws EmptyInput.
std::vector<ParetoRow> pareto_report(const std::vector<ParetoInput>& rows);

// One line of a runs table.
struct RunRow {
  std::string label;
  double ar = 0.0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

inline constexpr const char* kRunsCsvHeader = "label,ar,mean_ms,median_ms,flops,params";
inline constexpr const char* kReportCsvHeader = "label,ar,mean_ms,median_ms,flops,params,dominated";

// Header must name label, ar and mean_ms; the other columns are optional.
// Throws MalformedHeader, MalformedLine.
std::vector<RunRow> parse_runs_csv(const std::string& text);

// Pareto report over runs, latency = mean_ms, in kReportCsvHeader layout.
std::string report_csv(const std::vector<RunRow>& runs);
std::string report_json(const std::vector<RunRow>& runs);

std::string latency_record_csv(const LatencyRecord& record, double ar = 0.0);
std::string latency_record_json(const LatencyRecord& record);

}  // namespace fastpose

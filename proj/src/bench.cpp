#include "fastpose/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fastpose/datio.hpp"
#include "fastpose/errors.hpp"

namespace fastpose {

void summarize_samples(LatencyRecord& record) {
  const auto& s = record.samples_ms;
  if (s.empty()) fail(ErrorCode::kEmptyInput, "latency record has no samples");
  record.iterations = static_cast<int>(s.size());
  record.mean_ms = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  record.median_ms = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

LatencyRecord measure_latency(const LayerGraph& graph, const Shape& input, int iterations, int warmup,
                              std::string label) {
  if (iterations < 1) fail(ErrorCode::kInvalidConfig, "iterations must be >= 1");
  if (warmup < 0) fail(ErrorCode::kInvalidConfig, "warmup must be >= 0");
  Tensor x(input);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<float>((i % 17) / 17.0 - 0.5);

  // Keeps the optimizer from discarding the forward passes.
  volatile float sink = 0.0f;
  for (int i = 0; i < warmup; ++i) sink = sink + forward(graph, x).data[0];

  LatencyRecord r;
  r.label = std::move(label);
  r.samples_ms.reserve(iterations);
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < iterations; ++i) {
    const auto t0 = clock::now();
    const Tensor y = forward(graph, x);
    const auto t1 = clock::now();
    sink = sink + y.data[0];
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  summarize_samples(r);
  const FlopReport flops = count_flops(graph, input);
  r.flops = flops.total_macs + flops.total_elementwise;
  r.params = count_params(graph);
  return r;
}

std::vector<ParetoRow> pareto_report(const std::vector<ParetoInput>& rows) {
  if (rows.empty()) fail(ErrorCode::kEmptyInput, "pareto report needs at least one row");
  std::vector<ParetoRow> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < rows.size() && !dominated; ++j) {
      if (i == j) continue;
      const auto& a = rows[j];
      const auto& b = rows[i];
      dominated = a.ar >= b.ar && a.latency_ms <= b.latency_ms && (a.ar > b.ar || a.latency_ms < b.latency_ms);
    }
    out.push_back({rows[i].label, rows[i].ar, rows[i].latency_ms, dominated});
  }
  std::stable_sort(out.begin(), out.end(), [](const ParetoRow& a, const ParetoRow& b) {
    if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
    return a.label < b.label;
  });
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_field(const std::string& s, std::size_t line_no, const std::string& column) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::kMalformedLine,
         "line " + std::to_string(line_no) + ": bad value '" + s + "' in column " + column);
  }
  return v;
}

}  // namespace

std::vector<RunRow> parse_runs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> columns;
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (columns.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) columns[fields[i]] = i;
      for (const char* required : {"label", "ar", "mean_ms"}) {
        if (!columns.contains(required)) {
          fail(ErrorCode::kMalformedHeader, std::string("runs table lacks a '") + required + "' column");
        }
      }
      continue;
    }
    if (fields.size() != columns.size()) {
      fail(ErrorCode::kMalformedLine, "line " + std::to_string(line_no) + ": expected " +
                                          std::to_string(columns.size()) + " fields, got " +
                                          std::to_string(fields.size()));
    }
    RunRow r;
    r.label = fields[columns["label"]];
    r.ar = parse_field<double>(fields[columns["ar"]], line_no, "ar");
    r.mean_ms = parse_field<double>(fields[columns["mean_ms"]], line_no, "mean_ms");
    r.median_ms = r.mean_ms;
    if (auto it = columns.find("median_ms"); it != columns.end()) {
      r.median_ms = parse_field<double>(fields[it->second], line_no, "median_ms");
    }
    if (auto it = columns.find("flops"); it != columns.end()) {
      r.flops = parse_field<std::uint64_t>(fields[it->second], line_no, "flops");
    }
    if (auto it = columns.find("params"); it != columns.end()) {
      r.params = parse_field<std::uint64_t>(fields[it->second], line_no, "params");
    }
    rows.push_back(std::move(r));
  }
  if (columns.empty()) fail(ErrorCode::kMalformedHeader, "runs table is empty");
  return rows;
}

namespace {

std::vector<std::pair<ParetoRow, const RunRow*>> ranked(const std::vector<RunRow>& runs) {
  std::vector<ParetoInput> inputs;
  for (const auto& r : runs) inputs.push_back({r.label, r.ar, r.mean_ms});
  const auto report = pareto_report(inputs);
  // Labels may repeat, so match report rows back to runs by consuming them.
  std::vector<bool> used(runs.size(), false);
  std::vector<std::pair<ParetoRow, const RunRow*>> out;
  for (const auto& row : report) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (!used[i] && runs[i].label == row.label && runs[i].ar == row.ar && runs[i].mean_ms == row.latency_ms) {
        used[i] = true;
        out.emplace_back(row, &runs[i]);
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::string report_csv(const std::vector<RunRow>& runs) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& [row, run] : ranked(runs)) {
    out += row.label + "," + format_real(row.ar) + "," + format_real(run->mean_ms) + "," +
           format_real(run->median_ms) + "," + std::to_string(run->flops) + "," + std::to_string(run->params) +
           "," + (row.dominated ? "true" : "false") + "\n";
  }
  return out;
}

std::string report_json(const std::vector<RunRow>& runs) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [row, run] : ranked(runs)) {
    rows.push_back({{"label", row.label},
                    {"ar", row.ar},
                    {"mean_ms", run->mean_ms},
                    {"median_ms", run->median_ms},
                    {"flops", run->flops},
                    {"params", run->params},
                    {"dominated", row.dominated}});
  }
  return nlohmann::json{{"rows", rows}}.dump(2) + "\n";
}

std::string latency_record_csv(const LatencyRecord& r, double ar) {
  return std::string(kRunsCsvHeader) + "\n" + r.label + "," + format_real(ar) + "," + format_real(r.mean_ms) +
         "," + format_real(r.median_ms) + "," + std::to_string(r.flops) + "," + std::to_string(r.params) + "\n";
}

std::string latency_record_json(const LatencyRecord& r) {
  nlohmann::json j = {{"label", r.label},         {"iterations", r.iterations}, {"mean_ms", r.mean_ms},
                      {"median_ms", r.median_ms}, {"flops", r.flops},           {"params", r.params},
                      {"samples_ms", r.samples_ms}};
  return j.dump(2) + "\n";
}

}  // namespace fastpose

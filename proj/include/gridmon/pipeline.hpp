#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gridmon/nn.hpp"
#include "gridmon/signal.hpp"

namespace gridmon::pipeline {

// One unit of work flowing between stages: a chunk of samples, a feature
// vector, or a verdict, tagged with the source span it was computed from.
struct Item {
  std::vector<double> values;
  std::int64_t span_begin = 0;  // first source sample contributing
  std::int64_t span_end = 0;    // one past the last
  std::string label;            // verdict text on sink-bound items
};

// Consume one item, emit zero or more. Each stage runs on its own thread;
// state captured by the callable must not be shared with anything else.
using StageFn = std::function<std::vector<Item>(const Item&)>;

struct StageSpec {
  std::string name;
  StageFn fn;
  std::size_t queue_capacity = 8;    // input queue slots
  double nominal_duration_ms = 0.0;  // loop budget metadata, 0 = unbudgeted
  double period_ms = 0.0;
  std::string placement;  // "acquisition" | "feature" | "classify"
};

using SampleGen = std::function<double(std::int64_t)>;

struct SourceSpec {
  SampleStream stream;  // used when non-empty
  SampleGen generator;          // used when the stream is empty
  double sample_rate_hz = 0.0;  // generator rate; the stream carries its own
  double duration_s = 0.0;      // cap; 0 = whole stream (generator must set it)
  std::size_t chunk = 256;      // samples per item
  bool paced = true;            // deliver chunks at the sample rate
  double nominal_duration_ms = 3.5;  // acquisition loop budget metadata
  double period_ms = 12.8;
};

struct StageCount {
  std::string name;
  std::uint64_t consumed = 0;
  std::uint64_t emitted = 0;
};

struct PipelineStats {
  double incoming_throughput = 0.0;  // samples/s
  double outgoing_throughput = 0.0;  // results/s
  std::vector<double> latencies_ms;  // one per emitted result
  double jitter_ms = 0.0;            // latency standard deviation
  std::uint64_t overflow_count = 0;  // pushes that found a link queue full
  std::size_t max_queue_occupancy = 0;
  std::uint64_t samples_in = 0;
  std::uint64_t results_out = 0;
  double elapsed_s = 0.0;
  std::vector<StageCount> stage_counts;
  std::string schedulability_note;  // set when the loop budget is >= 100%
};

struct RunResult {
  PipelineStats stats;
  std::vector<Item> results;
};

// Drive the chain to completion: a source thread feeds the first stage, each
// stage runs on its own thread, bounded first-in-first-out queues connect
// them. A push into a full queue waits for room (nothing is ever dropped) and
// is counted as one overflow-risk event. Latency is measured from the moment
// the first contributing sample was acquired (paced runs) or from run start
// (unpaced) to the final stage's emission, on the monotonic clock.
RunResult run_pipeline(const SourceSpec& source, const std::vector<StageSpec>& stages);

// Periodic loop costs as (duration_ms, period_ms) rows.
struct LoopBudget {
  std::vector<std::pair<double, double>> entries;
};

// Share of one processor the loops claim together, percent.
double processor_budget(const LoopBudget& budget);

// Budget rows of a configured chain, source loop first; unbudgeted stages
// (period 0) are skipped.
LoopBudget chain_budget(const SourceSpec& source, const std::vector<StageSpec>& stages);

struct LatencyReport {
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  double jitter_ms = 0.0;
};

LatencyReport latency_report(const PipelineStats& stats);

// Canonical fault-detection chain: band-energy maps every 1536 samples over
// a 1792-sample span, then the given classifier. The model is copied into
// the stage. The stages carry rolling state, so build a fresh chain for
// every run.
std::vector<StageSpec> hif_chain(const nn::Network& classifier, double sample_rate_hz = 20000.0);

}  // namespace gridmon::pipeline

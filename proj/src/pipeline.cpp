#include "gridmon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "gridmon/bands.hpp"
#include "gridmon/detect.hpp"
#include "gridmon/errors.hpp"

namespace gridmon::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

struct Msg {
  bool end = false;
  Item item;
  Clock::time_point stamp;
};

// Mutex-guarded bounded FIFO. A full push waits (backpressure) and records
// one overflow-risk event; abort() releases every waiter so a failed run can
// drain without deadlocking.
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(cap) {}

  void push(Msg m) {
    std::unique_lock lock(mu_);
    if (!aborted_ && q_.size() >= cap_) {
      ++overflows_;
      room_.wait(lock, [&] { return aborted_ || q_.size() < cap_; });
    }
    if (aborted_) return;
    q_.push_back(std::move(m));
    ++pushed_;
    max_occupancy_ = std::max(max_occupancy_, q_.size());
    ready_.notify_one();
  }

  std::optional<Msg> pop() {
    std::unique_lock lock(mu_);
    ready_.wait(lock, [&] { return aborted_ || !q_.empty(); });
    if (q_.empty()) return std::nullopt;  // aborted and drained
    Msg m = std::move(q_.front());
    q_.pop_front();
    ++popped_;
    room_.notify_one();
    return m;
  }

  void abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    ready_.notify_all();
    room_.notify_all();
  }

  std::uint64_t overflows() const {
    std::lock_guard lock(mu_);
    return overflows_;
  }
  std::size_t max_occupancy() const {
    std::lock_guard lock(mu_);
    return max_occupancy_;
  }
  std::uint64_t pushed() const {
    std::lock_guard lock(mu_);
    return pushed_;
  }
  std::uint64_t popped() const {
    std::lock_guard lock(mu_);
    return popped_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable ready_;
  std::condition_variable room_;
  std::deque<Msg> q_;
  std::size_t cap_;
  bool aborted_ = false;
  std::uint64_t overflows_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t popped_ = 0;
  std::size_t max_occupancy_ = 0;
};

struct SourcePlan {
  double rate = 0.0;
  std::uint64_t total_samples = 0;
};

SourcePlan plan_source(const SourceSpec& source) {
  SourcePlan plan;
  if (!source.stream.samples.empty()) {
    plan.rate = source.stream.sample_rate_hz;
    plan.total_samples = source.stream.samples.size();
    if (source.duration_s > 0.0) {
      const auto cap = static_cast<std::uint64_t>(source.duration_s * plan.rate);
      plan.total_samples = std::min<std::uint64_t>(plan.total_samples, cap);
    }
  } else if (source.generator) {
    if (source.sample_rate_hz <= 0.0 || source.duration_s <= 0.0) {
      throw InvalidArgument("a generator source needs a positive rate and duration");
    }
    plan.rate = source.sample_rate_hz;
    plan.total_samples = static_cast<std::uint64_t>(source.duration_s * plan.rate);
  } else {
    throw InvalidArgument("source has neither samples nor a generator");
  }
  if (plan.rate <= 0.0) throw InvalidArgument("sample rate must be positive");
  if (plan.total_samples == 0) throw InvalidArgument("source spans zero samples");
  return plan;
}

}  // namespace

double processor_budget(const LoopBudget& budget) {
  if (budget.entries.empty()) throw InvalidArgument("loop budget is empty");
  double sum = 0.0;
  for (const auto& [duration, period] : budget.entries) {
    if (duration <= 0.0 || period <= 0.0) {
      throw InvalidArgument("loop durations and periods must be positive");
    }
    sum += duration / period;
  }
  return sum * 100.0;
}

LoopBudget chain_budget(const SourceSpec& source, const std::vector<StageSpec>& stages) {
  LoopBudget budget;
  if (source.period_ms > 0.0 && source.nominal_duration_ms > 0.0) {
    budget.entries.emplace_back(source.nominal_duration_ms, source.period_ms);
  }
  for (const auto& stage : stages) {
    if (stage.period_ms > 0.0 && stage.nominal_duration_ms > 0.0) {
      budget.entries.emplace_back(stage.nominal_duration_ms, stage.period_ms);
    }
  }
  return budget;
}

RunResult run_pipeline(const SourceSpec& source, const std::vector<StageSpec>& stages) {
  if (stages.empty()) throw InvalidArgument("pipeline needs at least one stage");
  if (source.chunk == 0) throw InvalidArgument("chunk size must be positive");
  for (const auto& stage : stages) {
    if (!stage.fn) throw InvalidArgument("stage '" + stage.name + "' has no function");
    if (stage.queue_capacity < 1) {
      throw InvalidArgument("stage '" + stage.name + "' needs at least one queue slot");
    }
    if (stage.period_ms > 0.0 && stage.nominal_duration_ms > stage.period_ms) {
      throw InvalidArgument("stage '" + stage.name + "' budgets more time than its period");
    }
  }
  if (source.period_ms > 0.0 && source.nominal_duration_ms > source.period_ms) {
    throw InvalidArgument("source budgets more time than its period");
  }
  const auto plan = plan_source(source);

  RunResult run;
  // Links: queue[i] feeds stage i; the sink queue is the framework's own
  // collection buffer, deliberately unbounded so instrumentation never
  // backpressures the chain it measures.
  std::vector<std::unique_ptr<BoundedQueue>> queues;
  for (const auto& stage : stages) queues.push_back(std::make_unique<BoundedQueue>(stage.queue_capacity));
  queues.push_back(std::make_unique<BoundedQueue>(std::numeric_limits<std::size_t>::max()));

  const auto budget = chain_budget(source, stages);
  if (!budget.entries.empty()) {
    const double pct = processor_budget(budget);
    if (pct >= 100.0) {
      run.stats.schedulability_note =
          "loop budget claims " + std::to_string(pct) + "% of one processor; not schedulable";
    }
  }

  std::mutex failure_mu;
  std::string failure;
  auto fail = [&](const std::string& what) {
    {
      std::lock_guard lock(failure_mu);
      if (failure.empty()) failure = what;
    }
    for (auto& q : queues) q->abort();
  };

  const auto t0 = Clock::now();

  std::thread source_thread([&] {
    const std::size_t chunk = source.chunk;
    std::uint64_t sent = 0;
    while (sent < plan.total_samples) {
      const std::size_t n =
          static_cast<std::size_t>(std::min<std::uint64_t>(chunk, plan.total_samples - sent));
      Msg m;
      m.item.span_begin = static_cast<std::int64_t>(sent);
      m.item.span_end = static_cast<std::int64_t>(sent + n);
      m.item.values.resize(n);
      for (std::size_t j = 0; j < n; ++j) {
        const auto idx = static_cast<std::int64_t>(sent + j);
        m.item.values[j] = source.stream.samples.empty()
                               ? source.generator(idx)
                               : source.stream.samples[static_cast<std::size_t>(idx)];
      }
      if (source.paced) {
        // The chunk becomes available once its last sample has been acquired.
        const double at_s = static_cast<double>(sent + n) / plan.rate;
        std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(
                                               std::chrono::duration<double>(at_s)));
      }
      m.stamp = Clock::now();
      queues.front()->push(std::move(m));
      sent += n;
    }
    queues.front()->push(Msg{.end = true});
  });

  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    workers.emplace_back([&, i] {
      auto& in = *queues[i];
      auto& out = *queues[i + 1];
      const auto& stage = stages[i];
      while (true) {
        auto msg = in.pop();
        if (!msg) return;  // aborted
        if (msg->end) {
          out.push(Msg{.end = true});
          return;
        }
        std::vector<Item> emitted;
        try {
          emitted = stage.fn(msg->item);
        } catch (const std::exception& e) {
          fail("stage '" + stage.name + "' failed: " + e.what());
          return;
        }
        for (auto& item : emitted) {
          Msg next;
          next.item = std::move(item);
          next.stamp = Clock::now();
          out.push(std::move(next));
        }
      }
    });
  }

  // Drain the sink on this thread so results never pile up against a limit.
  auto& sink = *queues.back();
  while (true) {
    auto msg = sink.pop();
    if (!msg || msg->end) break;
    const double emit_s = std::chrono::duration<double>(msg->stamp - t0).count();
    const double born_s =
        source.paced ? static_cast<double>(msg->item.span_begin) / plan.rate : 0.0;
    run.stats.latencies_ms.push_back((emit_s - born_s) * 1000.0);
    run.results.push_back(std::move(msg->item));
  }

  source_thread.join();
  for (auto& w : workers) w.join();
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  {
    std::lock_guard lock(failure_mu);
    if (!failure.empty()) throw PipelineError(failure);
  }

  auto& stats = run.stats;
  stats.samples_in = plan.total_samples;
  stats.results_out = run.results.size();
  stats.elapsed_s = elapsed;
  stats.incoming_throughput = static_cast<double>(plan.total_samples) / elapsed;
  stats.outgoing_throughput = static_cast<double>(run.results.size()) / elapsed;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stats.overflow_count += queues[i]->overflows();
    stats.max_queue_occupancy = std::max(stats.max_queue_occupancy, queues[i]->max_occupancy());
    stats.stage_counts.push_back(
        {stages[i].name, queues[i]->popped(), queues[i + 1]->pushed()});
  }
  // The sentinel is bookkeeping, not payload.
  for (auto& count : stats.stage_counts) {
    count.consumed -= 1;
    count.emitted -= 1;
  }
  if (!stats.latencies_ms.empty()) {
    double mean = 0.0;
    for (double v : stats.latencies_ms) mean += v;
    mean /= static_cast<double>(stats.latencies_ms.size());
    double var = 0.0;
    for (double v : stats.latencies_ms) var += (v - mean) * (v - mean);
    stats.jitter_ms = std::sqrt(var / static_cast<double>(stats.latencies_ms.size()));
  }
  return run;
}

LatencyReport latency_report(const PipelineStats& stats) {
  if (stats.latencies_ms.empty()) {
    throw InvalidArgument("latency report needs at least one result");
  }
  auto sorted = stats.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return sorted[std::min(n - 1, k == 0 ? 0 : k - 1)];
  };
  LatencyReport report;
  report.p50_ms = rank(0.50);
  report.p99_ms = rank(0.99);
  report.max_ms = sorted.back();
  report.jitter_ms = stats.jitter_ms;
  return report;
}

std::vector<StageSpec> hif_chain(const nn::Network& classifier, double sample_rate_hz) {
  if (sample_rate_hz <= 0.0) throw InvalidArgument("sample rate must be positive");

  struct FeatureState {
    std::vector<double> buffer;
    std::int64_t buffer_start = 0;
    std::int64_t next_map = 0;
  };
  auto state = std::make_shared<FeatureState>();
  const double rate = sample_rate_hz;

  StageSpec feature;
  feature.name = "feature";
  feature.placement = "feature";
  feature.nominal_duration_ms = 20.9;
  feature.period_ms = 76.8;
  feature.fn = [state, rate](const Item& chunk) {
    constexpr std::int64_t kSpan = hif::kHifMapSpan;
    constexpr std::int64_t kHop = 1536;
    auto& s = *state;
    s.buffer.insert(s.buffer.end(), chunk.values.begin(), chunk.values.end());
    std::vector<Item> out;
    while (s.buffer_start + static_cast<std::int64_t>(s.buffer.size()) >= s.next_map + kSpan) {
      SampleStream window;
      window.sample_rate_hz = rate;
      const auto offset = static_cast<std::size_t>(s.next_map - s.buffer_start);
      window.samples.assign(s.buffer.begin() + static_cast<std::ptrdiff_t>(offset),
                            s.buffer.begin() + static_cast<std::ptrdiff_t>(offset + kSpan));
      const auto map = hif::hif_feature_map(window, 0);
      Item item;
      item.values = map.values;
      item.span_begin = s.next_map;
      item.span_end = s.next_map + kSpan;
      out.push_back(std::move(item));
      s.next_map += kHop;
      const auto drop = static_cast<std::size_t>(s.next_map - s.buffer_start);
      if (drop > 0 && drop <= s.buffer.size()) {
        s.buffer.erase(s.buffer.begin(), s.buffer.begin() + static_cast<std::ptrdiff_t>(drop));
        s.buffer_start = s.next_map;
      }
    }
    return out;
  };

  auto model = std::make_shared<nn::Network>(classifier);
  StageSpec classify;
  classify.name = "classify";
  classify.placement = "classify";
  classify.nominal_duration_ms = 1.0;
  classify.period_ms = 76.8;
  classify.fn = [model](const Item& feat) {
    hif::FeatureMap map;
    map.values = feat.values;
    map.rows = 8;
    map.cols = 6;
    map.span_begin = feat.span_begin;
    map.span_end = feat.span_end;
    const auto verdict = detect::classify_hif(map, *model);
    Item item;
    item.values = {verdict.probability};
    item.span_begin = feat.span_begin;
    item.span_end = feat.span_end;
    item.label = verdict.label;
    return std::vector<Item>{std::move(item)};
  };

  return {std::move(feature), std::move(classify)};
}

}  // namespace gridmon::pipeline

#include "gridmon/events.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "gridmon/errors.hpp"
#include "gridmon/wavelet.hpp"

namespace gridmon::events {

namespace {

constexpr double kMeanSquareFloor = 1e-20;
constexpr double kInf = std::numeric_limits<double>::infinity();

double cost_tol(double a, double b) {
  return 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double segment_cost(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("segment_cost needs at least one sample");
  double sumsq = 0.0;
  for (double v : x) sumsq += v * v;
  const double ms = std::max(sumsq / static_cast<double>(x.size()), kMeanSquareFloor);
  return static_cast<double>(x.size()) * std::log(ms);
}

ChangepointResult detect_changepoints(const Frame& frame, const ChangepointConfig& cfg) {
  const std::size_t n = frame.values.size();
  if (cfg.min_segment < 2) throw InvalidArgument("min_segment must be at least 2");
  if (n < 2 * cfg.min_segment)
    throw InvalidArgument("frame of " + std::to_string(n) +
                          " samples cannot host two segments of " +
                          std::to_string(cfg.min_segment));
  const double beta = cfg.beta.value_or(2.0 * std::log(static_cast<double>(n)));
  if (!(beta >= 0.0)) throw InvalidArgument("penalty must be nonnegative");

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    prefix[i + 1] = prefix[i] + frame.values[i] * frame.values[i];
  const auto cost = [&](std::size_t i, std::size_t j) {
    const auto len = static_cast<double>(j - i);
    return len * std::log(std::max((prefix[j] - prefix[i]) / len, kMeanSquareFloor));
  };

  const std::size_t m = cfg.min_segment;
  const std::size_t feasible = n / m - 1;
  const std::size_t cap = std::min(cfg.max_changepoints.value_or(feasible), feasible);

  // Lower bound on any segmentation's cost: every segment's mean square is
  // at least the global minimum over admissible segments.
  double min_ms = kMeanSquareFloor;
  {
    double best = kInf;
    for (std::size_t i = 0; i + m <= n; ++i)
      for (std::size_t j = i + m; j <= n; ++j)
        best = std::min(best, (prefix[j] - prefix[i]) / static_cast<double>(j - i));
    min_ms = std::max(best, kMeanSquareFloor);
  }
  const double floor_cost = static_cast<double>(n) * std::log(min_ms);

  // layers[k][s] = least cost of splitting [s, n) into k+1 admissible
  // segments (infinity where impossible).
  std::vector<std::vector<double>> layers;
  layers.emplace_back(n + 1, kInf);
  for (std::size_t s = 0; s + m <= n; ++s) layers[0][s] = cost(s, n);

  double best_total = layers[0][0];
  std::size_t best_k = 0;
  for (std::size_t k = 1; k <= cap; ++k) {
    if (!cfg.max_changepoints &&
        floor_cost + beta * static_cast<double>(k) >
            best_total + cost_tol(floor_cost, best_total))
      break;  // no deeper split can beat the incumbent
    layers.emplace_back(n + 1, kInf);
    const auto& prev = layers[k - 1];
    auto& cur = layers[k];
    for (std::size_t s = 0; s + (k + 1) * m <= n; ++s) {
      double best = kInf;
      for (std::size_t t = s + m; t + k * m <= n; ++t) {
        if (prev[t] == kInf) continue;
        best = std::min(best, cost(s, t) + prev[t]);
      }
      cur[s] = best;
    }
    if (cur[0] == kInf) break;
    const double total = cur[0] + beta * static_cast<double>(k);
    if (total < best_total - cost_tol(total, best_total)) {
      best_total = total;
      best_k = k;
    }
  }

  ChangepointResult result;
  result.total_cost = best_total;
  std::size_t start = 0;
  for (std::size_t remaining = best_k; remaining > 0; --remaining) {
    const double want = layers[remaining][start];
    for (std::size_t c = start + m; c + remaining * m <= n; ++c) {
      const double via = cost(start, c) + layers[remaining - 1][c];
      if (std::abs(via - want) <= cost_tol(via, want)) {
        result.changepoints.push_back(c);
        start = c;
        break;
      }
    }
  }
  return result;
}

namespace {

std::vector<double> centered_moving_average(const std::vector<double>& x, std::size_t w) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  w = std::max<std::size_t>(w, 1);
  const auto half = static_cast<std::ptrdiff_t>(w / 2);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - half);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n),
                                             static_cast<std::ptrdiff_t>(i + w) - half);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

// Order-statistic window over a fixed span that slides monotonically.
class RollingMedian {
 public:
  void insert(double v) {
    if (lo_.empty() || v <= *lo_.rbegin())
      lo_.insert(v);
    else
      hi_.insert(v);
    rebalance();
  }
  void erase(double v) {
    if (auto it = lo_.find(v); it != lo_.end())
      lo_.erase(it);
    else
      hi_.erase(hi_.find(v));
    rebalance();
  }
  double median() const { return lo_.empty() ? 0.0 : *lo_.rbegin(); }

 private:
  void rebalance() {
    while (lo_.size() > hi_.size() + 1) {
      hi_.insert(*lo_.rbegin());
      lo_.erase(std::prev(lo_.end()));
    }
    while (hi_.size() > lo_.size()) {
      lo_.insert(*hi_.begin());
      hi_.erase(hi_.begin());
    }
  }
  std::multiset<double> lo_, hi_;
};

}  // namespace

std::vector<TransientEvent> wavelet_event_detect(const SampleStream& stream,
                                                 double threshold_mult,
                                                 const WaveletDetectorConfig& cfg) {
  if (!(threshold_mult > 0.0)) throw InvalidArgument("threshold multiplier must be positive");
  const std::size_t n = stream.samples.size();
  if (n < std::max<std::size_t>(4 * cfg.smooth_window, 32)) return {};

  const auto detail = wavelet::highband_extract(stream.samples, wavelet::daubechies9());
  std::vector<double> energy(detail.size());
  for (std::size_t i = 0; i < detail.size(); ++i) energy[i] = detail[i] * detail[i];
  const auto smooth = centered_moving_average(energy, std::max<std::size_t>(cfg.smooth_window / 2, 1));

  const std::size_t nd = smooth.size();
  std::size_t med_w = std::min(std::max<std::size_t>(cfg.median_window / 2, 3) | 1u, nd);
  RollingMedian rolling;
  for (std::size_t i = 0; i < med_w; ++i) rolling.insert(smooth[i]);

  double total_sq = 0.0;
  for (double v : stream.samples) total_sq += v * v;
  const double abs_floor = 1e-12 * total_sq / static_cast<double>(n);

  const std::size_t refractory_dec = std::max<std::size_t>(cfg.refractory / 2, 1);
  // The half-band filter reads periodically, so the stream's ends alias onto
  // each other; triggers inside the affected margin (filter span plus the
  // smoothing smear) are ignored.
  const std::size_t edge = wavelet::daubechies9().lowpass.size() / 2 +
                           std::max<std::size_t>(cfg.smooth_window / 4, 1) + 8;
  std::vector<TransientEvent> out;
  std::size_t window_lo = 0;
  bool in_group = false;
  std::size_t group_first = 0, group_last = 0, group_peak = 0;

  const auto flush = [&]() {
    if (!in_group) return;
    TransientEvent ev;
    ev.index = static_cast<std::int64_t>(2 * group_peak);
    ev.peak_energy = smooth[group_peak];
    ev.burst_begin = static_cast<std::int64_t>(2 * group_first);
    ev.burst_end = static_cast<std::int64_t>(2 * (group_last + 1));
    out.push_back(ev);
    in_group = false;
  };

  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t target_lo =
        std::min(i > med_w / 2 ? i - med_w / 2 : 0, nd - med_w);
    while (window_lo < target_lo) {
      rolling.erase(smooth[window_lo]);
      rolling.insert(smooth[window_lo + med_w]);
      ++window_lo;
    }
    const double med = rolling.median();
    const bool interior = i >= edge && i + edge < nd;
    if (interior && smooth[i] > threshold_mult * med && smooth[i] > abs_floor) {
      if (in_group && i - group_last <= refractory_dec) {
        group_last = i;
        if (smooth[i] > smooth[group_peak]) group_peak = i;
      } else {
        flush();
        in_group = true;
        group_first = group_last = group_peak = i;
      }
    }
  }
  flush();
  return out;
}

Frame extract_transient(const SampleStream& stream, std::int64_t event_index) {
  const auto n = static_cast<std::int64_t>(stream.samples.size());
  if (event_index < 512 || event_index + 512 > n)
    throw InvalidArgument("event at " + std::to_string(event_index) +
                          " lacks the 512-sample margin inside a stream of " +
                          std::to_string(n));
  Frame f;
  f.sample_rate_hz = stream.sample_rate_hz;
  f.start_index = event_index - 512;
  f.values.assign(stream.samples.begin() + (event_index - 512),
                  stream.samples.begin() + (event_index + 512));
  return f;
}

StateSegmentation segment_states(const SampleStream& stream, double threshold_mult,
                                 std::int64_t guard, const WaveletDetectorConfig& cfg) {
  if (guard < 0) throw InvalidArgument("guard margin must be nonnegative");
  StateSegmentation seg;
  const auto n = static_cast<std::int64_t>(stream.samples.size());
  if (n == 0) return seg;

  const auto events = wavelet_event_detect(stream, threshold_mult, cfg);
  std::vector<std::pair<std::int64_t, std::int64_t>> spans;
  for (const auto& ev : events) {
    const auto lo = std::max<std::int64_t>(0, ev.burst_begin - guard);
    const auto hi = std::min<std::int64_t>(n, ev.burst_end + guard);
    if (!spans.empty() && lo <= spans.back().second)
      spans.back().second = std::max(spans.back().second, hi);
    else
      spans.emplace_back(lo, hi);
  }

  std::int64_t pos = 0;
  for (const auto& [lo, hi] : spans) {
    if (lo > pos) seg.segments.push_back({pos, lo, StateLabel::steady});
    seg.segments.push_back({lo, hi, StateLabel::transient});
    pos = hi;
  }
  if (pos < n) seg.segments.push_back({pos, n, StateLabel::steady});
  return seg;
}

std::vector<TransientEvent> combined_event_detect(const SampleStream& stream,
                                                  double nominal_hz, double threshold_mult,
                                                  const ChangepointConfig& cp,
                                                  const WaveletDetectorConfig& wd) {
  if (!(nominal_hz > 0.0) || !(stream.sample_rate_hz > 0.0))
    throw InvalidArgument("combined detection needs positive rates");

  struct Tagged {
    TransientEvent ev;
    bool from_wavelet;
  };
  std::vector<Tagged> all;
  for (const auto& ev : wavelet_event_detect(stream, threshold_mult, wd))
    all.push_back({ev, true});

  const auto window = static_cast<std::size_t>(
      std::llround(stream.sample_rate_hz / (2.0 * nominal_hz)));
  const std::size_t n = stream.samples.size();
  if (window >= 2 && n >= 2 * window * cp.min_segment) {
    Frame track;
    track.sample_rate_hz = stream.sample_rate_hz / static_cast<double>(window);
    for (std::size_t start = 0; start + window <= n; start += window) {
      double sumsq = 0.0;
      for (std::size_t i = start; i < start + window; ++i)
        sumsq += stream.samples[i] * stream.samples[i];
      track.values.push_back(std::sqrt(sumsq / static_cast<double>(window)));
    }
    const auto res = detect_changepoints(track, cp);
    for (std::size_t c : res.changepoints) {
      TransientEvent ev;
      ev.index = static_cast<std::int64_t>(c * window);
      const double before = track.values[c - 1] * track.values[c - 1];
      const double after = track.values[c] * track.values[c];
      ev.peak_energy = std::abs(after - before);
      ev.burst_begin = static_cast<std::int64_t>((c - 1) * window);
      ev.burst_end = static_cast<std::int64_t>((c + 1) * window);
      all.push_back({ev, false});
    }
  }

  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged& a, const Tagged& b) { return a.ev.index < b.ev.index; });
  std::vector<TransientEvent> out;
  const auto refractory = static_cast<std::int64_t>(wd.refractory);
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].ev.index - all[j].ev.index <= refractory) ++j;
    // Within a cluster the wavelet event carries calibrated burst bounds.
    std::size_t pick = i;
    for (std::size_t k = i; k <= j; ++k)
      if (all[k].from_wavelet && !all[pick].from_wavelet) pick = k;
    out.push_back(all[pick].ev);
    i = j + 1;
  }
  return out;
}

}  // namespace gridmon::events

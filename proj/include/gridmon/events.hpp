#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::events {

struct ChangepointConfig {
  // Per-changepoint penalty; unset picks the BIC-like 2 ln(n).
  std::optional<double> beta;
  std::size_t min_segment = 2;
  // Hard cap on the number of changepoints searched; unset searches every
  // feasible count.
  std::optional<std::size_t> max_changepoints;
};

struct ChangepointResult {
  // First index of each right-hand segment, strictly increasing. Segments
  // are [0, k1), [k1, k2), ..., [kK, n).
  std::vector<std::size_t> changepoints;
  // Sum of segment costs plus penalty * count for the reported split.
  double total_cost = 0.0;
};

// len * ln(mean square), the variance log-likelihood cost of one segment.
// Mean squares below 1e-20 are clamped so silence stays finite.
double segment_cost(std::span<const double> x);

// Exact minimizer of total segment cost + beta * K over all segmentations
// whose segments hold at least min_segment samples. The frame is expected to
// carry a derived statistic track (e.g. a half-cycle RMS series), not raw
// waveform samples. Dynamic programming over (count, split) is exhaustive,
// O(n^2) per count layer; unneeded layers are skipped once a lower bound
// proves they cannot win. Ties prefer fewer changepoints, then the
// lexicographically earliest positions.
ChangepointResult detect_changepoints(const Frame& frame,
                                      const ChangepointConfig& cfg = {});

struct WaveletDetectorConfig {
  // Moving-average window over the squared high-band detail, in original-
  // domain samples.
  std::size_t smooth_window = 64;
  // Detections closer than this (original-domain samples) merge into one
  // event.
  std::size_t refractory = 2000;
  // Span of the rolling background median, in original-domain samples;
  // clamped to the stream length.
  std::size_t median_window = 4000;
};

struct TransientEvent {
  // Original-domain sample index of peak smoothed high-band energy.
  std::int64_t index = 0;
  double peak_energy = 0.0;
  // Original-domain burst span [burst_begin, burst_end).
  std::int64_t burst_begin = 0;
  std::int64_t burst_end = 0;
};

// Switching-transient detector for low-power events: half-band detail ->
// squared -> moving average -> compare against threshold_mult times a
// rolling median of the same track. Sized for streams of a second or more
// at 10 kHz; shorter streams simply shrink the median span. Streams too
// short to smooth return no events rather than failing.
std::vector<TransientEvent> wavelet_event_detect(const SampleStream& stream,
                                                 double threshold_mult = 6.0,
                                                 const WaveletDetectorConfig& cfg = {});

// The 1024 samples straddling a detected event: [index - 512, index + 512).
Frame extract_transient(const SampleStream& stream, std::int64_t event_index);

enum class StateLabel { steady, transient };

struct StateSegment {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  StateLabel label = StateLabel::steady;
};

struct StateSegmentation {
  // Tiles [0, stream length); adjacent segments alternate labels.
  std::vector<StateSegment> segments;
};

// Transient spans are detected bursts padded by `guard` samples on both
// sides and merged; steady spans are the complement.
StateSegmentation segment_states(const SampleStream& stream, double threshold_mult = 6.0,
                                 std::int64_t guard = 512,
                                 const WaveletDetectorConfig& cfg = {});

// Runs the RMS-track changepoint search (sized for heavy switching) and the
// wavelet detector (sensitive to low-power switching) and unions the two,
// dropping duplicates that fall within the refractory gap of each other.
std::vector<TransientEvent> combined_event_detect(const SampleStream& stream,
                                                  double nominal_hz = 50.0,
                                                  double threshold_mult = 6.0,
                                                  const ChangepointConfig& cp = {},
                                                  const WaveletDetectorConfig& wd = {});

}  // namespace gridmon::events

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::pq {

// Event thresholds as fractions of the nominal RMS voltage.
//
// Band layout over [0, inf):
//   [0, interruption)        interruption
//   [dip_lo, dip_hi]         dip
//   (dip_hi, swell_lo)       normal
//   [swell_lo, swell_hi]     swell
//   (swell_hi, inf)          out of band (reported as a flagged swell)
// Boundaries belong to the event side; an interruption is always also
// inside a dip (interruption <= dip_lo).
struct PqThresholds {
  double swell_lo = 1.10;
  double swell_hi = 1.80;
  double dip_lo = 0.10;
  double dip_hi = 0.90;
  double interruption = 0.10;
  // Minimum |d fraction / dt| (per second) between successive normal-band
  // points for a rapid voltage change.
  double rapid_change_rate = 0.05;
};

enum class RmsBand { interruption, dip, normal, swell, out_of_band };

const char* band_name(RmsBand band);

// Total partition of fraction >= 0 into the five bands above.
RmsBand classify_rms(double fraction, const PqThresholds& thr = {});

// One RMS observation: `index` is the sample offset of the window start.
struct RmsPoint {
  std::int64_t index = 0;
  double fraction = 0.0;
};

// Half-cycle non-overlapping RMS track: window = round(rate / (2 f0))
// samples, one point per window, fraction of `nominal_rms`.
std::vector<RmsPoint> rms_series(const SampleStream& voltage, double nominal_rms,
                                 double nominal_hz);

enum class EventKind { swell, dip, interruption, rapid_change };

const char* event_kind_name(EventKind kind);

// start_index is the first observation inside the event; end_index is the
// observation at which recovery was seen (exclusive), so the event covers
// [start_index, end_index). A series that ends mid-event closes at the last
// observation instead. rapid_change spans the merged run of offending pairs
// and its end_index is the last point of the run.
struct PqEvent {
  EventKind kind = EventKind::dip;
  std::int64_t start_index = 0;
  std::int64_t end_index = 0;
  // Worst excursion: min fraction for dip/interruption, max for swell,
  // peak |d fraction / dt| for rapid_change.
  double extremum = 0.0;
  double time_s = 0.0;
  bool out_of_band = false;
  // interruption points at its enclosing dip (index into the result).
  std::optional<std::size_t> parent;
};

// Single-pass hysteresis tracker. Events appear in opening order, parents
// before children. An event opens when an idle kind sees a fraction past
// its start threshold and closes when the active kind sees its recovery
// value (dip: >= dip_hi, swell: <= swell_lo, interruption: >= interruption).
// The recovery observation is re-examined for openings, so a dip can hand
// over to a swell without a gap.
std::vector<PqEvent> track_events(const std::vector<RmsPoint>& series,
                                  const PqThresholds& thr, double sample_rate_hz);

struct ElectricalParams {
  double rms_voltage = 0.0;
  double rms_current = 0.0;
  double frequency_hz = 0.0;
  double active_power_w = 0.0;
  double power_factor = 0.0;
  // RMS magnitude of voltage harmonics at k * frequency_hz, k = 1..13.
  std::vector<double> harmonic_magnitudes;
};

// Per-frame electrical parameters from aligned voltage/current frames.
// Frequency is searched inside [0.8, 1.2] * nominal_hz: a zero-padded
// spectrum peak seeds a least-squares single-tone refinement, which stays
// accurate even when the frame holds barely more than one cycle. Active
// power averages v*i over the largest whole number of estimated cycles to
// suppress partial-cycle bias; the power factor divides by the RMS values
// of that same span.
ElectricalParams compute_params(const Frame& voltage, const Frame& current,
                                double nominal_hz);

}  // namespace gridmon::pq

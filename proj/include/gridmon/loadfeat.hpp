#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::loadfeat {

// One harmonic order: RMS magnitudes and the voltage-minus-current phase in
// (-pi, pi]. A current that lags (inductive load) has positive phase.
struct Phasor {
  int order = 0;
  double v_rms = 0.0;
  double i_rms = 0.0;
  double phase = 0.0;
};

// Harmonic phasors of aligned frames spanning whole cycles of f0. Magnitudes
// are read at bin round(k * f0 / resolution); orders whose bin reaches the
// Nyquist fold are omitted.
std::vector<Phasor> phasors(const Frame& voltage, const Frame& current, double f0_hz,
                            int max_order = 13);

struct PowerReading {
  double active_w = 0.0;
  double reactive_var = 0.0;
};

// P = sum V_k I_k cos(phase_k), Q = sum V_k I_k sin(phase_k); empty input
// reads zero power.
PowerReading active_reactive(const std::vector<Phasor>& ph);

// after minus before.
std::pair<double, double> delta_pq(const PowerReading& before, const PowerReading& after);

struct PowerDelta {
  PowerReading before;
  PowerReading after;
  double delta_p = 0.0;
  double delta_q = 0.0;
};

// Steady-state power change across one switching burst: the before window is
// the 5 whole cycles ending one cycle ahead of burst_begin (keeping the
// detector's smoothing smear out), the after window is 5 cycles starting 10
// settling cycles past burst_end.
PowerDelta power_delta_around(const SampleStream& voltage, const SampleStream& current,
                              std::int64_t burst_begin, std::int64_t burst_end,
                              double f0_hz);

// Octave band log-energies of a switching transient, highest band first,
// followed by the power deltas.
struct LoadFeatureVector {
  std::array<double, 7> band_log{};  // [2500,5000] down to [39.06,78.125) Hz
  double delta_p = 0.0;
  double delta_q = 0.0;
  std::array<double, 9> as_array() const;
};

// The transient frame must be the 1024 samples at 10 kHz that
// events::extract_transient produces. Hann-windowed spectrum, mean |X|^2 per
// octave band between 39.06 Hz and 5 kHz, log10 with the same floor the
// fault-detector maps use.
LoadFeatureVector load_feature_vector(const Frame& transient, double delta_p,
                                      double delta_q);

}  // namespace gridmon::loadfeat

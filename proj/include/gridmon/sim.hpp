#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::sim {

// Zero-phase FIR lowpass (windowed sinc, centred) used to keep generated
// templates and noise below cutoff_fraction * sample rate.
std::vector<double> fir_lowpass(std::span<const double> x, double cutoff_fraction = 0.45,
                                std::size_t taps = 63);

// Arcing ground-contact fault: two anti-parallel conduction branches with
// independent dead-zone voltages and resistances. Conduction is zero while
// the drive voltage sits inside the dead zone; thresholds and resistances are
// re-drawn each half cycle within +-jitter; whole cycles drop out with
// probability `intermittence`; each conducted cycle multiplies both branch
// resistances by `buildup_decay`, so values below 1 grow the fault current.
// While conducting, the current is modulated by band-limited arc noise of
// relative strength `arc_noise`; zeros stay exactly zero.
struct HifConfig {
  double v_rms = 6350.0;
  double fundamental_hz = 50.0;
  double sample_rate_hz = 20000.0;
  double duration_s = 1.0;
  double r_pos_ohm = 60e3;
  double r_neg_ohm = 75e3;
  double v_pos = 2200.0;
  double v_neg = 2800.0;
  double jitter = 0.15;
  double intermittence = 0.05;
  double buildup_decay = 1.0;
  double arc_noise = 0.15;
};

enum class Surface { tree, sand, soil };
const char* surface_name(Surface);
HifConfig hif_preset(Surface);

SampleStream gen_hif(const HifConfig& cfg, std::uint64_t seed);

// Fundamental-frequency current with band-limited gaussian noise at the given
// signal-to-noise ratio (dB). Pass +infinity for a clean tone.
SampleStream gen_load_current(double rms_a, double snr_db, double sample_rate_hz,
                              double duration_s, std::uint64_t seed,
                              double fundamental_hz = 50.0, double phase_rad = 0.0);

// Adds a load fundamental whose RMS is `ratio` times the fault RMS and whose
// phase matches the fault's fundamental.
SampleStream superimpose(const SampleStream& fault, double ratio, double fundamental_hz = 50.0);

SampleStream add_noise(const SampleStream& in, double snr_db, std::uint64_t seed);

enum class TransientKind { capacitor_switch, inrush, resistive_step, motor_start };
const char* transient_name(TransientKind);

struct TransientConfig {
  double base_rms_a = 10.0;
  double fundamental_hz = 50.0;
  double sample_rate_hz = 10000.0;
  double duration_s = 2.0;
  double at_s = 0.8;        // event onset
  double magnitude = 1.0;   // kind-specific scale (e.g. resistive_step multiplies the base by this)
};

// Steady fundamental plus an additive switching template of the given kind.
// Templates are band-limited below 0.45 * sample rate.
SampleStream gen_transient(TransientKind kind, const TransientConfig& cfg, std::uint64_t seed);

enum class Appliance { kettle, fridge, microwave, dishwasher, washing_machine };
const char* appliance_name(Appliance);

// Appliance power profile in watts at one sample per 6 seconds.
std::vector<double> gen_activation(Appliance a, std::size_t samples, std::uint64_t seed);

struct AggregateParts {
  std::vector<double> aggregate_w;
  std::vector<double> target_w;
  std::vector<double> background_w;
  std::vector<double> noise_w;
};

// aggregate = target + background + noise, exactly; background is a sum of
// other appliances' activations; the aggregate never goes negative.
AggregateParts gen_aggregate(Appliance target, std::size_t samples, int background_count,
                             std::uint64_t seed, bool include_target);

}  // namespace gridmon::sim

#include "gridmon/sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "gridmon/errors.hpp"
#include "gridmon/rng.hpp"

namespace gridmon::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> sine(std::size_t n, double fs, double f, double amp, double phase = 0.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = amp * std::sin(kTwoPi * f * static_cast<double>(i) / fs + phase);
  return v;
}

// Fundamental phasor at f0; phase convention: x = A sin(w t + phi).
std::complex<double> goertzel(std::span<const double> x, double fs, double f0) {
  std::complex<double> acc(0.0, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double ang = -kTwoPi * f0 * static_cast<double>(t) / fs;
    acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return acc;
}

double fundamental_phase(std::span<const double> x, double fs, double f0) {
  return std::arg(goertzel(x, fs, f0)) + std::numbers::pi / 2.0;
}

}  // namespace

std::vector<double> fir_lowpass(std::span<const double> x, double cutoff_fraction,
                                std::size_t taps) {
  if (taps % 2 == 0 || taps < 3) throw InvalidArgument("fir_lowpass: taps must be odd and >= 3");
  if (cutoff_fraction <= 0.0 || cutoff_fraction >= 0.5)
    throw InvalidArgument("fir_lowpass: cutoff must lie in (0, 0.5)");
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const double kk = static_cast<double>(k);
    const double s = k == 0 ? 2.0 * cutoff_fraction
                            : std::sin(kTwoPi * cutoff_fraction * kk) / (std::numbers::pi * kk);
    const double w =
        0.5 + 0.5 * std::cos(std::numbers::pi * kk / static_cast<double>(half + 1));
    h[static_cast<std::size_t>(k + half)] = s * w;
    sum += s * w;
  }
  for (double& v : h) v /= sum;  // unit DC gain

  // Edges replicate the boundary sample so a level that persists to either
  // end stays flat instead of rolling off toward zero.
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k, 0, n - 1);
      acc += x[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(k + half)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

const char* surface_name(Surface s) {
  switch (s) {
    case Surface::tree: return "tree";
    case Surface::sand: return "sand";
    case Surface::soil: return "soil";
  }
  return "?";
}

HifConfig hif_preset(Surface s) {
  HifConfig c;
  switch (s) {
    case Surface::tree:
      c.r_pos_ohm = 90e3;
      c.r_neg_ohm = 120e3;
      c.v_pos = 3000.0;
      c.v_neg = 3800.0;
      c.jitter = 0.25;
      c.intermittence = 0.25;
      c.buildup_decay = 1.0;
      c.arc_noise = 0.30;
      break;
    case Surface::sand:
      c.r_pos_ohm = 70e3;
      c.r_neg_ohm = 85e3;
      c.v_pos = 2400.0;
      c.v_neg = 3000.0;
      c.jitter = 0.15;
      c.intermittence = 0.08;
      c.buildup_decay = 0.997;
      c.arc_noise = 0.20;
      break;
    case Surface::soil:
      c.r_pos_ohm = 45e3;
      c.r_neg_ohm = 55e3;
      c.v_pos = 1800.0;
      c.v_neg = 2200.0;
      c.jitter = 0.10;
      c.intermittence = 0.02;
      c.buildup_decay = 0.999;
      c.arc_noise = 0.15;
      break;
  }
  return c;
}

SampleStream gen_hif(const HifConfig& cfg, std::uint64_t seed) {
  if (cfg.sample_rate_hz <= 0.0 || cfg.fundamental_hz <= 0.0 || cfg.duration_s <= 0.0)
    throw InvalidArgument("gen_hif: rates and duration must be positive");
  if (cfg.r_pos_ohm <= 0.0 || cfg.r_neg_ohm <= 0.0)
    throw InvalidArgument("gen_hif: resistances must be positive");
  if (cfg.jitter < 0.0 || cfg.jitter >= 1.0 || cfg.intermittence < 0.0 || cfg.intermittence > 1.0 ||
      cfg.buildup_decay <= 0.0 || cfg.buildup_decay > 1.0 || cfg.arc_noise < 0.0)
    throw InvalidArgument("gen_hif: jitter/intermittence/buildup/arc_noise out of range");

  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));

  std::vector<double> arc(n, 0.0);
  if (cfg.arc_noise > 0.0) {
    for (auto& v : arc) v = rng.normal();
    arc = fir_lowpass(arc, 0.45);
  }
  const double v_peak = std::numbers::sqrt2 * cfg.v_rms;
  const double samples_per_half = cfg.sample_rate_hz / (2.0 * cfg.fundamental_hz);

  SampleStream out;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.channel = Channel::current;
  out.samples.assign(n, 0.0);

  double r_scale = 1.0;
  std::int64_t cur_half = -1;
  bool cycle_conducts = true;
  bool cycle_touched = false;
  double vp = cfg.v_pos, vn = cfg.v_neg, rp = cfg.r_pos_ohm, rn = cfg.r_neg_ohm;

  for (std::size_t t = 0; t < n; ++t) {
    const auto half_idx = static_cast<std::int64_t>(static_cast<double>(t) / samples_per_half);
    if (half_idx != cur_half) {
      cur_half = half_idx;
      const double j = cfg.jitter;
      if (half_idx % 2 == 0) {  // a new cycle begins on the positive half
        if (cycle_touched && cycle_conducts) r_scale *= cfg.buildup_decay;
        cycle_conducts = !rng.bernoulli(cfg.intermittence);
        cycle_touched = true;
        vp = cfg.v_pos * (1.0 + j * rng.uniform(-1.0, 1.0));
        rp = cfg.r_pos_ohm * (1.0 + j * rng.uniform(-1.0, 1.0));
      } else {
        vn = cfg.v_neg * (1.0 + j * rng.uniform(-1.0, 1.0));
        rn = cfg.r_neg_ohm * (1.0 + j * rng.uniform(-1.0, 1.0));
      }
    }
    if (!cycle_conducts) continue;
    const double v = v_peak * std::sin(kTwoPi * cfg.fundamental_hz *
                                       static_cast<double>(t) / cfg.sample_rate_hz);
    double i = 0.0;
    if (v > vp)
      i = (v - vp) / (rp * r_scale);
    else if (v < -vn)
      i = (v + vn) / (rn * r_scale);
    // inside the dead zone the branch is open: exactly zero, and the
    // multiplicative arc noise preserves that
    out.samples[t] = i * (1.0 + cfg.arc_noise * arc[t]);
  }
  return out;
}

SampleStream gen_load_current(double rms_a, double snr_db, double sample_rate_hz,
                              double duration_s, std::uint64_t seed, double fundamental_hz,
                              double phase_rad) {
  if (rms_a < 0.0 || sample_rate_hz <= 0.0 || duration_s <= 0.0)
    throw InvalidArgument("gen_load_current: invalid amplitude, rate or duration");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  SampleStream out;
  out.sample_rate_hz = sample_rate_hz;
  out.channel = Channel::current;
  out.samples = sine(n, sample_rate_hz, fundamental_hz, std::numbers::sqrt2 * rms_a, phase_rad);

  if (std::isfinite(snr_db)) {
    Rng rng(seed);
    std::vector<double> noise(n);
    for (auto& v : noise) v = rng.normal();
    noise = fir_lowpass(noise, 0.45);
    double p_noise = 0.0;
    for (double v : noise) p_noise += v * v;
    p_noise /= static_cast<double>(n);
    const double p_signal = rms_a * rms_a;
    const double target = p_signal / std::pow(10.0, snr_db / 10.0);
    const double scale = p_noise > 0.0 ? std::sqrt(target / p_noise) : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += scale * noise[i];
  }
  return out;
}

SampleStream superimpose(const SampleStream& fault, double ratio, double fundamental_hz) {
  if (ratio < 0.0) throw InvalidArgument("superimpose: ratio must be non-negative");
  if (fault.samples.empty() || fault.sample_rate_hz <= 0.0)
    throw InvalidArgument("superimpose: empty fault stream");
  const double fault_rms = rms(fault.samples);
  const double phase = fundamental_phase(fault.samples, fault.sample_rate_hz, fundamental_hz);
  SampleStream out = fault;
  const double amp = std::numbers::sqrt2 * ratio * fault_rms;
  for (std::size_t t = 0; t < out.samples.size(); ++t)
    out.samples[t] += amp * std::sin(kTwoPi * fundamental_hz * static_cast<double>(t) /
                                         fault.sample_rate_hz +
                                     phase);
  return out;
}

SampleStream add_noise(const SampleStream& in, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) return in;
  Rng rng(seed);
  std::vector<double> noise(in.samples.size());
  for (auto& v : noise) v = rng.normal();
  noise = fir_lowpass(noise, 0.45);
  double p_noise = 0.0, p_signal = 0.0;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    p_noise += noise[i] * noise[i];
    p_signal += in.samples[i] * in.samples[i];
  }
  const double scale =
      p_noise > 0.0 ? std::sqrt(p_signal / std::pow(10.0, snr_db / 10.0) / p_noise) : 0.0;
  SampleStream out = in;
  for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += scale * noise[i];
  return out;
}

const char* transient_name(TransientKind k) {
  switch (k) {
    case TransientKind::capacitor_switch: return "capacitor_switch";
    case TransientKind::inrush: return "inrush";
    case TransientKind::resistive_step: return "resistive_step";
    case TransientKind::motor_start: return "motor_start";
  }
  return "?";
}

SampleStream gen_transient(TransientKind kind, const TransientConfig& cfg, std::uint64_t seed) {
  if (cfg.sample_rate_hz <= 0.0 || cfg.duration_s <= 0.0)
    throw InvalidArgument("gen_transient: invalid rate or duration");
  if (cfg.at_s < 0.0 || cfg.at_s >= cfg.duration_s)
    throw InvalidArgument("gen_transient: event time outside the stream");
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
  const auto at = static_cast<std::size_t>(std::llround(cfg.at_s * cfg.sample_rate_hz));
  const double base_peak = std::numbers::sqrt2 * cfg.base_rms_a;
  const double fs = cfg.sample_rate_hz;

  // The template is synthesised with a tail margin and truncated after
  // filtering, so persistent kinds do not pick up an artificial edge at the
  // end of the buffer.
  const std::size_t gen_n = n + 64;
  std::vector<double> tmpl(gen_n, 0.0);
  switch (kind) {
    case TransientKind::capacitor_switch: {
      const double f_ring = rng.uniform(1000.0, 3000.0);
      const double tau = rng.uniform(2e-3, 10e-3);
      const double amp = cfg.magnitude * base_peak * rng.uniform(0.5, 1.5);
      for (std::size_t t = at; t < gen_n; ++t) {
        const double dt = static_cast<double>(t - at) / fs;
        if (dt > 8.0 * tau) break;
        tmpl[t] = amp * std::exp(-dt / tau) * std::sin(kTwoPi * f_ring * dt);
      }
      break;
    }
    case TransientKind::inrush: {
      const double cycles = std::floor(rng.uniform(5.0, 20.0));
      const double decay = rng.uniform(0.7, 0.9);
      const double amp = cfg.magnitude * base_peak * rng.uniform(2.0, 4.0);
      const double cycle_s = 1.0 / cfg.fundamental_hz;
      for (std::size_t t = at; t < gen_n; ++t) {
        const double dt = static_cast<double>(t - at) / fs;
        const double cyc = std::floor(dt / cycle_s);
        if (cyc >= cycles) break;
        const double s = std::sin(kTwoPi * cfg.fundamental_hz * dt);
        const double asym = s > 0.0 ? s : 0.3 * s;  // positive peaks dominate
        tmpl[t] = amp * std::pow(decay, cyc) * asym;
      }
      break;
    }
    case TransientKind::resistive_step: {
      const double m = cfg.magnitude;  // post/pre amplitude ratio
      for (std::size_t t = at; t < gen_n; ++t)
        tmpl[t] = (m - 1.0) * base_peak *
                  std::sin(kTwoPi * cfg.fundamental_hz * static_cast<double>(t) / fs);
      break;
    }
    case TransientKind::motor_start: {
      const double a0 = cfg.magnitude * base_peak * rng.uniform(3.0, 5.0);
      const double tau = rng.uniform(0.1, 0.3);
      const double run = 0.5 * base_peak;
      for (std::size_t t = at; t < gen_n; ++t) {
        const double dt = static_cast<double>(t - at) / fs;
        const double tt = static_cast<double>(t) / fs;
        const double env = std::exp(-dt / tau);
        tmpl[t] = a0 * env * std::sin(kTwoPi * cfg.fundamental_hz * dt) +
                  0.3 * a0 * env * std::sin(kTwoPi * 25.0 * dt) +
                  run * std::sin(kTwoPi * cfg.fundamental_hz * tt);
      }
      break;
    }
  }
  tmpl = fir_lowpass(tmpl, 0.45);
  tmpl.resize(n);

  SampleStream out;
  out.sample_rate_hz = fs;
  out.channel = Channel::current;
  out.samples = sine(n, fs, cfg.fundamental_hz, base_peak);
  for (std::size_t t = 0; t < n; ++t) out.samples[t] += tmpl[t];
  return out;
}

const char* appliance_name(Appliance a) {
  switch (a) {
    case Appliance::kettle: return "kettle";
    case Appliance::fridge: return "fridge";
    case Appliance::microwave: return "microwave";
    case Appliance::dishwasher: return "dishwasher";
    case Appliance::washing_machine: return "washing_machine";
  }
  return "?";
}

namespace {

void place_plateau(std::vector<double>& p, std::size_t start, std::size_t dur, double watts) {
  for (std::size_t i = start; i < std::min(p.size(), start + dur); ++i) p[i] = watts;
}

}  // namespace

std::vector<double> gen_activation(Appliance a, std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw InvalidArgument("gen_activation: samples must be positive");
  Rng rng(seed);
  std::vector<double> p(samples, 0.0);
  switch (a) {
    case Appliance::kettle: {
      const auto dur = static_cast<std::size_t>(rng.uniform_int(15, 25));  // 90-150 s
      const auto start = static_cast<std::size_t>(
          rng.uniform_int(0, std::max<std::int64_t>(0, static_cast<std::int64_t>(samples) -
                                                           static_cast<std::int64_t>(dur) - 1)));
      place_plateau(p, start, dur, rng.uniform(1850.0, 2150.0));
      break;
    }
    case Appliance::fridge: {
      std::size_t t = static_cast<std::size_t>(rng.uniform_int(0, 80));
      while (t < samples) {
        const auto on = static_cast<std::size_t>(rng.uniform_int(25, 40));
        const double watts = rng.uniform(110.0, 150.0);
        if (t < samples) p[t] = watts * rng.uniform(1.5, 2.0);  // compressor start kick
        place_plateau(p, t + 1, on - 1, watts);
        t += on + static_cast<std::size_t>(rng.uniform_int(50, 90));
      }
      break;
    }
    case Appliance::microwave: {
      const auto dur = static_cast<std::size_t>(rng.uniform_int(10, 25));
      const auto start = static_cast<std::size_t>(
          rng.uniform_int(0, std::max<std::int64_t>(0, static_cast<std::int64_t>(samples) -
                                                           static_cast<std::int64_t>(dur) - 1)));
      const double watts = rng.uniform(1150.0, 1300.0);
      const bool pulsed = rng.bernoulli(0.2);
      for (std::size_t i = 0; i < dur && start + i < samples; ++i)
        p[start + i] = pulsed && (i / 5) % 2 == 1 ? 200.0 : watts;
      break;
    }
    case Appliance::dishwasher: {
      const std::size_t durs[5] = {static_cast<std::size_t>(rng.uniform_int(15, 25)),
                                   static_cast<std::size_t>(rng.uniform_int(20, 30)),
                                   static_cast<std::size_t>(rng.uniform_int(25, 40)),
                                   static_cast<std::size_t>(rng.uniform_int(10, 20)),
                                   static_cast<std::size_t>(rng.uniform_int(10, 20))};
      const double watts[5] = {rng.uniform(60.0, 100.0), rng.uniform(1800.0, 2000.0),
                               rng.uniform(60.0, 120.0), rng.uniform(1800.0, 2000.0),
                               rng.uniform(250.0, 350.0)};
      std::size_t total = 0;
      for (std::size_t d : durs) total += d;
      std::size_t t = total < samples
                          ? static_cast<std::size_t>(rng.uniform_int(
                                0, static_cast<std::int64_t>(samples - total)))
                          : 0;
      for (int ph = 0; ph < 5; ++ph) {
        place_plateau(p, t, durs[ph], watts[ph]);
        t += durs[ph];
      }
      break;
    }
    case Appliance::washing_machine: {
      std::size_t t = 0;
      const std::size_t fill = static_cast<std::size_t>(rng.uniform_int(8, 12));
      const std::size_t heat = static_cast<std::size_t>(rng.uniform_int(15, 25));
      const std::size_t tumble = static_cast<std::size_t>(rng.uniform_int(30, 50));
      const std::size_t spin = static_cast<std::size_t>(rng.uniform_int(10, 18));
      const std::size_t total = fill + heat + tumble + spin;
      t = total < samples ? static_cast<std::size_t>(
                                rng.uniform_int(0, static_cast<std::int64_t>(samples - total)))
                          : 0;
      place_plateau(p, t, fill, rng.uniform(40.0, 60.0));
      t += fill;
      place_plateau(p, t, heat, rng.uniform(1800.0, 2000.0));
      t += heat;
      for (std::size_t i = 0; i < tumble && t + i < samples; ++i)
        p[t + i] = (i / 3) % 2 == 0 ? 250.0 : 80.0;
      t += tumble;
      place_plateau(p, t, spin, rng.uniform(500.0, 700.0));
      break;
    }
  }
  return p;
}

AggregateParts gen_aggregate(Appliance target, std::size_t samples, int background_count,
                             std::uint64_t seed, bool include_target) {
  if (background_count < 0) throw InvalidArgument("gen_aggregate: negative background count");
  AggregateParts parts;
  parts.target_w.assign(samples, 0.0);
  parts.background_w.assign(samples, 0.0);
  parts.noise_w.assign(samples, 0.0);
  if (include_target) parts.target_w = gen_activation(target, samples, derive_seed(seed, 0));

  constexpr Appliance kAll[] = {Appliance::kettle, Appliance::fridge, Appliance::microwave,
                                Appliance::dishwasher, Appliance::washing_machine};
  int placed = 0;
  std::uint64_t stream = 1;
  while (placed < background_count) {
    const auto a = kAll[stream % std::size(kAll)];
    ++stream;
    if (a == target) continue;
    const auto act = gen_activation(a, samples, derive_seed(seed, stream));
    for (std::size_t i = 0; i < samples; ++i) parts.background_w[i] += act[i];
    ++placed;
  }

  Rng rng(derive_seed(seed, 999));
  for (std::size_t i = 0; i < samples; ++i) {
    const double partial = parts.target_w[i] + parts.background_w[i];
    // keep the aggregate physical (non-negative) while preserving the identity
    parts.noise_w[i] = std::max(rng.normal(0.0, 8.0), -partial);
  }
  parts.aggregate_w.resize(samples);
  for (std::size_t i = 0; i < samples; ++i)
    parts.aggregate_w[i] = parts.target_w[i] + parts.background_w[i] + parts.noise_w[i];
  return parts;
}

}  // namespace gridmon::sim

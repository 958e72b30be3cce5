#include "gridmon/loadfeat.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "gridmon/bands.hpp"
#include "gridmon/errors.hpp"

namespace gridmon::loadfeat {

namespace {

// Exact DFT bin; frame lengths here are whole cycles, rarely a power of two.
std::complex<double> dft_bin(std::span<const double> x, std::size_t bin) {
  const double step = -2.0 * std::numbers::pi * static_cast<double>(bin) /
                      static_cast<double>(x.size());
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double a = step * static_cast<double>(t);
    acc += x[t] * std::complex<double>{std::cos(a), std::sin(a)};
  }
  return acc;
}

double wrap_phase(double p) {
  p = std::remainder(p, 2.0 * std::numbers::pi);
  if (p <= -std::numbers::pi) p += 2.0 * std::numbers::pi;
  return p;
}

Frame slice(const SampleStream& s, std::int64_t begin, std::int64_t end,
            const char* what) {
  if (begin < 0 || end > static_cast<std::int64_t>(s.samples.size()) || begin >= end) {
    throw InvalidArgument(std::string(what) + " window [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") falls outside the stream of " +
                          std::to_string(s.samples.size()) + " samples");
  }
  Frame f;
  f.values.assign(s.samples.begin() + begin, s.samples.begin() + end);
  f.start_index = begin;
  f.sample_rate_hz = s.sample_rate_hz;
  return f;
}

}  // namespace

std::vector<Phasor> phasors(const Frame& voltage, const Frame& current, double f0_hz,
                            int max_order) {
  if (voltage.values.empty() || current.values.empty()) {
    throw InvalidArgument("phasors need non-empty frames");
  }
  if (voltage.values.size() != current.values.size()) {
    throw InvalidArgument("voltage frame has " + std::to_string(voltage.values.size()) +
                          " samples but current frame has " +
                          std::to_string(current.values.size()));
  }
  if (voltage.sample_rate_hz != current.sample_rate_hz || voltage.sample_rate_hz <= 0.0) {
    throw InvalidArgument("phasors need matching positive sample rates");
  }
  if (f0_hz <= 0.0) {
    throw InvalidArgument("fundamental frequency must be positive, got " +
                          std::to_string(f0_hz));
  }
  if (max_order < 1) {
    throw InvalidArgument("max_order must be at least 1, got " + std::to_string(max_order));
  }
  const std::size_t n = voltage.values.size();
  const double resolution = voltage.sample_rate_hz / static_cast<double>(n);
  if (static_cast<std::size_t>(std::llround(f0_hz / resolution)) == 0) {
    throw InvalidArgument("fundamental bin of " + std::to_string(f0_hz) +
                          " Hz collides with DC at a resolution of " +
                          std::to_string(resolution) + " Hz");
  }
  const double to_rms = std::numbers::sqrt2 / static_cast<double>(n);
  std::vector<Phasor> out;
  out.reserve(static_cast<std::size_t>(max_order));
  for (int k = 1; k <= max_order; ++k) {
    const auto bin =
        static_cast<std::size_t>(std::llround(static_cast<double>(k) * f0_hz / resolution));
    if (bin >= n - n / 2) break;  // at or past the Nyquist fold
    const auto v = dft_bin(voltage.values, bin);
    const auto i = dft_bin(current.values, bin);
    Phasor p;
    p.order = k;
    p.v_rms = to_rms * std::abs(v);
    p.i_rms = to_rms * std::abs(i);
    p.phase = wrap_phase(std::arg(v) - std::arg(i));
    out.push_back(p);
  }
  return out;
}

PowerReading active_reactive(const std::vector<Phasor>& ph) {
  PowerReading r;
  for (const auto& p : ph) {
    r.active_w += p.v_rms * p.i_rms * std::cos(p.phase);
    r.reactive_var += p.v_rms * p.i_rms * std::sin(p.phase);
  }
  return r;
}

std::pair<double, double> delta_pq(const PowerReading& before, const PowerReading& after) {
  return {after.active_w - before.active_w, after.reactive_var - before.reactive_var};
}

PowerDelta power_delta_around(const SampleStream& voltage, const SampleStream& current,
                              std::int64_t burst_begin, std::int64_t burst_end,
                              double f0_hz) {
  if (voltage.samples.size() != current.samples.size() ||
      voltage.sample_rate_hz != current.sample_rate_hz) {
    throw InvalidArgument("voltage and current streams must be aligned");
  }
  if (f0_hz <= 0.0 || voltage.sample_rate_hz <= 0.0) {
    throw InvalidArgument("power delta needs positive rates");
  }
  if (burst_begin >= burst_end) {
    throw InvalidArgument("burst [" + std::to_string(burst_begin) + ", " +
                          std::to_string(burst_end) + ") is empty");
  }
  const auto cyc = static_cast<std::int64_t>(std::llround(voltage.sample_rate_hz / f0_hz));
  if (cyc < 2) {
    throw InvalidArgument("fundamental period must span at least 2 samples");
  }
  PowerDelta d;
  const Frame vb = slice(voltage, burst_begin - 6 * cyc, burst_begin - cyc, "before");
  const Frame ib = slice(current, burst_begin - 6 * cyc, burst_begin - cyc, "before");
  const Frame va = slice(voltage, burst_end + 10 * cyc, burst_end + 15 * cyc, "after");
  const Frame ia = slice(current, burst_end + 10 * cyc, burst_end + 15 * cyc, "after");
  d.before = active_reactive(phasors(vb, ib, f0_hz));
  d.after = active_reactive(phasors(va, ia, f0_hz));
  std::tie(d.delta_p, d.delta_q) = delta_pq(d.before, d.after);
  return d;
}

std::array<double, 9> LoadFeatureVector::as_array() const {
  std::array<double, 9> a{};
  std::copy(band_log.begin(), band_log.end(), a.begin());
  a[7] = delta_p;
  a[8] = delta_q;
  return a;
}

LoadFeatureVector load_feature_vector(const Frame& transient, double delta_p,
                                      double delta_q) {
  if (transient.values.size() != 1024) {
    throw ShapeError("transient frame must hold 1024 samples, got " +
                     std::to_string(transient.values.size()));
  }
  if (transient.sample_rate_hz != 10000.0) {
    throw ShapeError("transient frame must be sampled at 10 kHz, got " +
                     std::to_string(transient.sample_rate_hz) + " Hz");
  }
  const auto plan = hif::default_band_plan(transient.sample_rate_hz);
  const auto spec = spectrum_of(transient, hann_window(transient.values.size()));
  const auto ascending = hif::band_log_energies(spec, plan);
  LoadFeatureVector v;
  // Highest octave first.
  for (std::size_t b = 0; b < v.band_log.size(); ++b) {
    v.band_log[b] = ascending[ascending.size() - 1 - b];
  }
  v.delta_p = delta_p;
  v.delta_q = delta_q;
  return v;
}

}  // namespace gridmon::loadfeat

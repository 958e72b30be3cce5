#include "gridmon/pq.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>

#include "gridmon/errors.hpp"

namespace gridmon::pq {

namespace {

void validate(const PqThresholds& t) {
  const bool ordered = t.interruption <= t.dip_lo && t.dip_lo <= t.dip_hi &&
                       t.dip_hi < 1.0 && 1.0 < t.swell_lo && t.swell_lo < t.swell_hi;
  if (!ordered || !(t.rapid_change_rate > 0.0))
    throw InvalidArgument("pq thresholds must satisfy interruption <= dip_lo <= dip_hi < 1 < swell_lo < swell_hi with a positive rapid-change rate");
}

}  // namespace

const char* band_name(RmsBand band) {
  switch (band) {
    case RmsBand::interruption: return "interruption";
    case RmsBand::dip: return "dip";
    case RmsBand::normal: return "normal";
    case RmsBand::swell: return "swell";
    case RmsBand::out_of_band: return "out_of_band";
  }
  return "?";
}

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::swell: return "swell";
    case EventKind::dip: return "dip";
    case EventKind::interruption: return "interruption";
    case EventKind::rapid_change: return "rapid_change";
  }
  return "?";
}

RmsBand classify_rms(double fraction, const PqThresholds& thr) {
  validate(thr);
  if (!(fraction >= 0.0))
    throw InvalidArgument("rms fraction must be >= 0, got " + std::to_string(fraction));
  if (fraction < thr.interruption) return RmsBand::interruption;
  if (fraction >= thr.dip_lo && fraction <= thr.dip_hi) return RmsBand::dip;
  if (fraction > thr.swell_hi) return RmsBand::out_of_band;
  if (fraction >= thr.swell_lo) return RmsBand::swell;
  return RmsBand::normal;
}

std::vector<RmsPoint> rms_series(const SampleStream& voltage, double nominal_rms,
                                 double nominal_hz) {
  if (!(voltage.sample_rate_hz > 0.0) || !(nominal_rms > 0.0) || !(nominal_hz > 0.0))
    throw InvalidArgument("rms_series needs positive sample rate, nominal rms and nominal frequency");
  const auto window =
      static_cast<std::size_t>(std::llround(voltage.sample_rate_hz / (2.0 * nominal_hz)));
  if (window < 2)
    throw InvalidArgument("half-cycle window of " + std::to_string(window) +
                          " samples is too short to measure rms");
  const std::size_t n = voltage.samples.size();
  if (n < window)
    throw InvalidArgument("stream of " + std::to_string(n) +
                          " samples is shorter than one half-cycle window of " +
                          std::to_string(window));
  std::vector<RmsPoint> out;
  out.reserve(n / window);
  for (std::size_t start = 0; start + window <= n; start += window) {
    double sumsq = 0.0;
    for (std::size_t i = start; i < start + window; ++i)
      sumsq += voltage.samples[i] * voltage.samples[i];
    out.push_back({static_cast<std::int64_t>(start),
                   std::sqrt(sumsq / static_cast<double>(window)) / nominal_rms});
  }
  return out;
}

std::vector<PqEvent> track_events(const std::vector<RmsPoint>& series,
                                  const PqThresholds& thr, double sample_rate_hz) {
  validate(thr);
  if (!(sample_rate_hz > 0.0))
    throw InvalidArgument("track_events needs a positive sample rate");
  std::vector<PqEvent> out;
  std::optional<std::size_t> dip_ev, swell_ev, intr_ev, rapid_ev;

  const auto open = [&](EventKind kind, std::int64_t index, double fraction,
                        std::optional<std::size_t> parent) {
    PqEvent ev;
    ev.kind = kind;
    ev.start_index = index;
    ev.end_index = index;
    ev.extremum = fraction;
    ev.time_s = static_cast<double>(index) / sample_rate_hz;
    ev.parent = parent;
    out.push_back(ev);
    return out.size() - 1;
  };

  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::int64_t idx = series[i].index;
    const double f = series[i].fraction;
    if (i > 0 && idx <= series[i - 1].index)
      throw InvalidArgument("rms series indices must be strictly increasing around offset " +
                            std::to_string(idx));
    if (!(f >= 0.0))
      throw InvalidArgument("rms fraction must be >= 0, got " + std::to_string(f));

    // Recovery first, children before parents; the same observation may
    // then open the next event without a gap.
    if (intr_ev && f >= thr.interruption) {
      out[*intr_ev].end_index = idx;
      intr_ev.reset();
    }
    if (dip_ev && f >= thr.dip_hi) {
      out[*dip_ev].end_index = idx;
      dip_ev.reset();
    }
    if (swell_ev && f <= thr.swell_lo) {
      out[*swell_ev].end_index = idx;
      swell_ev.reset();
    }

    if (!swell_ev && f >= thr.swell_lo) swell_ev = open(EventKind::swell, idx, f, {});
    if (!dip_ev && f <= thr.dip_hi) dip_ev = open(EventKind::dip, idx, f, {});
    if (!intr_ev && f < thr.interruption)
      intr_ev = open(EventKind::interruption, idx, f, dip_ev);

    if (swell_ev) {
      auto& ev = out[*swell_ev];
      ev.extremum = std::max(ev.extremum, f);
      if (f > thr.swell_hi) ev.out_of_band = true;
    }
    if (dip_ev) out[*dip_ev].extremum = std::min(out[*dip_ev].extremum, f);
    if (intr_ev) out[*intr_ev].extremum = std::min(out[*intr_ev].extremum, f);

    if (i > 0) {
      const auto& prev = series[i - 1];
      const double dt = static_cast<double>(idx - prev.index) / sample_rate_hz;
      const double rate = std::abs(f - prev.fraction) / dt;
      const bool both_normal = classify_rms(prev.fraction, thr) == RmsBand::normal &&
                               classify_rms(f, thr) == RmsBand::normal;
      if (both_normal && rate > thr.rapid_change_rate) {
        if (rapid_ev && out[*rapid_ev].end_index == prev.index) {
          auto& ev = out[*rapid_ev];
          ev.end_index = idx;
          ev.extremum = std::max(ev.extremum, rate);
        } else {
          rapid_ev = open(EventKind::rapid_change, prev.index, rate, {});
          out[*rapid_ev].end_index = idx;
        }
      }
    }
  }

  if (!series.empty()) {
    const std::int64_t last = series.back().index;
    for (auto& ev : {intr_ev, dip_ev, swell_ev})
      if (ev) out[*ev].end_index = last;
  }
  return out;
}

namespace {

// Residual sum of squares after fitting a*cos(wt) + b*sin(wt) + d.
double tone_fit_sse(const std::vector<double>& x, double sample_rate_hz, double f) {
  const double w = 2.0 * std::numbers::pi * f / sample_rate_hz;
  double scc = 0, sss = 0, scs = 0, sc = 0, ss = 0;
  double sxc = 0, sxs = 0, sx = 0, sxx = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double c = std::cos(w * static_cast<double>(t));
    const double s = std::sin(w * static_cast<double>(t));
    scc += c * c;
    sss += s * s;
    scs += c * s;
    sc += c;
    ss += s;
    sxc += x[t] * c;
    sxs += x[t] * s;
    sx += x[t];
    sxx += x[t] * x[t];
  }
  double m[3][4] = {{scc, scs, sc, sxc},
                    {scs, sss, ss, sxs},
                    {sc, ss, static_cast<double>(x.size()), sx}};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    if (std::abs(m[pivot][col]) < 1e-12 * static_cast<double>(x.size())) return sxx;
    std::swap(m[col], m[pivot]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double k = m[r][col] / m[col][col];
      for (int c2 = col; c2 < 4; ++c2) m[r][c2] -= k * m[col][c2];
    }
  }
  const double a = m[0][3] / m[0][0];
  const double b = m[1][3] / m[1][1];
  const double d = m[2][3] / m[2][2];
  return sxx - (a * sxc + b * sxs + d * sx);
}

double golden_min(const std::vector<double>& x, double sample_rate_hz, double lo,
                  double hi) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - (b - a) * invphi;
  double d = a + (b - a) * invphi;
  double fc = tone_fit_sse(x, sample_rate_hz, c);
  double fd = tone_fit_sse(x, sample_rate_hz, d);
  for (int it = 0; it < 90 && b - a > 1e-9; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * invphi;
      fc = tone_fit_sse(x, sample_rate_hz, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * invphi;
      fd = tone_fit_sse(x, sample_rate_hz, d);
    }
  }
  return 0.5 * (a + b);
}

double estimate_frequency(const std::vector<double>& samples, double sample_rate_hz,
                          double nominal_hz) {
  const double band_lo = 0.8 * nominal_hz;
  const double band_hi = 1.2 * nominal_hz;
  const std::size_t n = samples.size();

  std::vector<double> x = samples;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  for (auto& v : x) v -= mean;

  std::size_t padded = 512;
  while (padded < 8 * n) padded *= 2;
  std::vector<double> buf(padded, 0.0);
  const auto win = hann_window(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] * win.coefficients[i];
  const auto spec = fft(buf);

  const double bin_hz = sample_rate_hz / static_cast<double>(padded);
  auto lo_bin = static_cast<std::size_t>(std::ceil(band_lo / bin_hz));
  auto hi_bin = static_cast<std::size_t>(std::floor(band_hi / bin_hz));
  lo_bin = std::max<std::size_t>(lo_bin, 1);
  hi_bin = std::min<std::size_t>(hi_bin, padded / 2);
  if (lo_bin > hi_bin)
    throw InvalidArgument("capture band around " + std::to_string(nominal_hz) +
                          " Hz holds no spectrum bins at this frame length");
  std::size_t peak = lo_bin;
  for (std::size_t k = lo_bin; k <= hi_bin; ++k)
    if (std::norm(spec[k]) > std::norm(spec[peak])) peak = k;

  double f_seed = static_cast<double>(peak) * bin_hz;
  if (peak > lo_bin && peak < hi_bin) {
    const double yl = std::log(std::norm(spec[peak - 1]) + 1e-300);
    const double yc = std::log(std::norm(spec[peak]) + 1e-300);
    const double yr = std::log(std::norm(spec[peak + 1]) + 1e-300);
    const double denom = yl - 2.0 * yc + yr;
    if (std::abs(denom) > 1e-12) {
      const double delta = std::clamp(0.5 * (yl - yr) / denom, -0.5, 0.5);
      f_seed = (static_cast<double>(peak) + delta) * bin_hz;
    }
  }

  // The least-squares landscape is unimodal within one natural bin of the
  // true tone; the seed is far more accurate than that.
  const double margin = 0.75 * sample_rate_hz / static_cast<double>(n);
  const double lo = std::max(band_lo, f_seed - margin);
  const double hi = std::min(band_hi, f_seed + margin);
  if (!(lo < hi)) return std::clamp(f_seed, band_lo, band_hi);
  return golden_min(x, sample_rate_hz, lo, hi);
}

}  // namespace

ElectricalParams compute_params(const Frame& voltage, const Frame& current,
                                double nominal_hz) {
  if (voltage.values.size() != current.values.size())
    throw InvalidArgument("voltage frame of " + std::to_string(voltage.values.size()) +
                          " samples is not aligned with current frame of " +
                          std::to_string(current.values.size()));
  if (voltage.sample_rate_hz != current.sample_rate_hz)
    throw InvalidArgument("voltage and current frames must share one sample rate");
  if (voltage.values.empty()) throw InvalidArgument("cannot analyse empty frames");
  if (!(voltage.sample_rate_hz > 0.0) || !(nominal_hz > 0.0))
    throw InvalidArgument("sample rate and nominal frequency must be positive");

  const double fs = voltage.sample_rate_hz;
  const std::size_t n = voltage.values.size();

  ElectricalParams p;
  p.rms_voltage = rms(voltage.values);
  p.rms_current = rms(current.values);
  p.frequency_hz = estimate_frequency(voltage.values, fs, nominal_hz);

  // Whole estimated cycles keep the v*i average free of partial-cycle bias.
  const double period = fs / p.frequency_hz;
  const auto cycles = static_cast<std::size_t>(static_cast<double>(n) / period);
  std::size_t len = n;
  if (cycles >= 1)
    len = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::llround(static_cast<double>(cycles) * period)));
  double sum_p = 0.0, sum_v2 = 0.0, sum_i2 = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    sum_p += voltage.values[t] * current.values[t];
    sum_v2 += voltage.values[t] * voltage.values[t];
    sum_i2 += current.values[t] * current.values[t];
  }
  p.active_power_w = sum_p / static_cast<double>(len);
  const double denom = std::sqrt(sum_v2 / static_cast<double>(len)) *
                       std::sqrt(sum_i2 / static_cast<double>(len));
  p.power_factor = denom > 0.0 ? std::clamp(p.active_power_w / denom, -1.0, 1.0) : 0.0;

  p.harmonic_magnitudes.resize(13, 0.0);
  for (std::size_t k = 1; k <= 13; ++k) {
    const double f_k = static_cast<double>(k) * p.frequency_hz;
    if (f_k >= fs / 2.0) break;  // orders at or above Nyquist stay zero
    const double w = 2.0 * std::numbers::pi * f_k / fs;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t)
      acc += voltage.values[t] *
             std::complex<double>(std::cos(w * static_cast<double>(t)),
                                  -std::sin(w * static_cast<double>(t)));
    p.harmonic_magnitudes[k - 1] = std::sqrt(2.0) * std::abs(acc) / static_cast<double>(n);
  }
  return p;
}

}  // namespace gridmon::pq

#include "gridmon/signal.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gridmon/errors.hpp"

namespace gridmon {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

WindowCoeffs hann_window(std::size_t length) {
  if (length == 0) throw InvalidArgument("hann_window: length must be positive");
  WindowCoeffs w;
  w.coefficients.resize(length);
  if (length == 1) {
    w.coefficients[0] = 0.0;
    return w;
  }
  const double denom = static_cast<double>(length - 1);
  for (std::size_t j = 0; j < length; ++j) {
    w.coefficients[j] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / denom);
  }
  return w;
}

std::vector<Frame> frame_stream(const SampleStream& stream, std::size_t frame_len,
                                double overlap_fraction) {
  if (stream.sample_rate_hz <= 0.0)
    throw InvalidArgument("frame_stream: sample rate must be positive");
  if (frame_len == 0 || frame_len > stream.samples.size())
    throw InvalidArgument("frame_stream: frame_len " + std::to_string(frame_len) +
                          " exceeds stream of " + std::to_string(stream.samples.size()));
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
    throw InvalidArgument("frame_stream: overlap must lie in [0, 1)");
  auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(frame_len) * (1.0 - overlap_fraction)));
  if (hop == 0) hop = 1;

  std::vector<Frame> frames;
  for (std::size_t start = 0; start + frame_len <= stream.samples.size(); start += hop) {
    Frame f;
    f.values.assign(stream.samples.begin() + static_cast<std::ptrdiff_t>(start),
                    stream.samples.begin() + static_cast<std::ptrdiff_t>(start + frame_len));
    f.start_index = static_cast<std::int64_t>(start);
    f.sample_rate_hz = stream.sample_rate_hz;
    frames.push_back(std::move(f));
  }
  return frames;
}

namespace {

void fft_in_place(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n))
    throw InvalidArgument("fft: length " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

}  // namespace

std::vector<std::complex<double>> fft(std::span<const double> x) {
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_in_place(a, false);
  return a;
}

std::vector<std::complex<double>> fft(std::span<const double> x, const WindowCoeffs& window) {
  if (window.coefficients.size() != x.size())
    throw InvalidArgument("fft: window length " + std::to_string(window.coefficients.size()) +
                          " does not match frame length " + std::to_string(x.size()));
  std::vector<std::complex<double>> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i] * window.coefficients[i];
  fft_in_place(a, false);
  return a;
}

std::vector<std::complex<double>> fft_complex(std::vector<std::complex<double>> x) {
  fft_in_place(x, false);
  return x;
}

std::vector<double> ifft_real(std::span<const std::complex<double>> bins) {
  std::vector<std::complex<double>> a(bins.begin(), bins.end());
  fft_in_place(a, true);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

Spectrum spectrum_of(const Frame& frame, const WindowCoeffs& window) {
  Spectrum s;
  s.bins = fft(frame.values, window);
  s.resolution_hz = frame.sample_rate_hz / static_cast<double>(frame.values.size());
  return s;
}

Spectrum spectrum_of(const Frame& frame) {
  Spectrum s;
  s.bins = fft(frame.values);
  s.resolution_hz = frame.sample_rate_hz / static_cast<double>(frame.values.size());
  return s;
}

double rms(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("rms: empty input");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> remove_dc(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("remove_dc: empty input");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

}  // namespace gridmon

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace gridmon {

enum class Channel { current, voltage };

// A contiguous run of samples from one measurement channel.
struct SampleStream {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;
  Channel channel = Channel::current;
};

// A windowed slice of a stream; start_index refers to the source stream.
struct Frame {
  std::vector<double> values;
  std::int64_t start_index = 0;
  double sample_rate_hz = 0.0;
};

struct WindowCoeffs {
  std::vector<double> coefficients;
};

// One-sided is never assumed: bins run over the full DFT length, bin k at
// k * resolution_hz (negative frequencies in the upper half).
struct Spectrum {
  std::vector<std::complex<double>> bins;
  double resolution_hz = 0.0;
};

// Raised-cosine taper; endpoints are exactly zero for length >= 2.
WindowCoeffs hann_window(std::size_t length);

// Slices a stream into frames of frame_len with the given fractional overlap
// in [0, 1). hop = frame_len * (1 - overlap); a partial tail is discarded.
std::vector<Frame> frame_stream(const SampleStream& stream, std::size_t frame_len,
                                double overlap_fraction);

// Radix-2 FFT, unnormalised forward transform. Length must be a power of two.
std::vector<std::complex<double>> fft(std::span<const double> x);
std::vector<std::complex<double>> fft(std::span<const double> x, const WindowCoeffs& window);
std::vector<std::complex<double>> fft_complex(std::vector<std::complex<double>> x);

// Inverse of fft(); returns the real part (imaginary residue is discarded).
std::vector<double> ifft_real(std::span<const std::complex<double>> bins);

Spectrum spectrum_of(const Frame& frame, const WindowCoeffs& window);
Spectrum spectrum_of(const Frame& frame);

double rms(std::span<const double> x);

// Subtracts the arithmetic mean.
std::vector<double> remove_dc(std::span<const double> x);

bool is_power_of_two(std::size_t n);

}  // namespace gridmon

#pragma once

#include <cstdint>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::hif {

// Octave partition of the analysis bandwidth. Band i covers
// [edges_hz[i], edges_hz[i+1]); the topmost band also includes its upper edge
// so the Nyquist bin has a home. Every band's upper edge is twice its lower
// edge except a first band anchored at 0.
struct BandPlan {
  std::vector<double> edges_hz;
  double sample_rate_hz = 0.0;

  std::size_t band_count() const { return edges_hz.empty() ? 0 : edges_hz.size() - 1; }
};

// 20 kHz: eight bands from 0 to 10 kHz. 10 kHz: seven bands from 39.0625 Hz
// to 5 kHz (sub-39 Hz bins, fundamental included, are deliberately out of
// plan there). Other rates are rejected.
BandPlan default_band_plan(double sample_rate_hz);

// Mean |X|^2 over each band's bins. The DC bin never contributes; bins land
// in a band by their centre frequency.
std::vector<double> band_energies(const Spectrum& spectrum, const BandPlan& plan);

// log10 of the mean band energies, floored so silence stays finite.
inline constexpr double kLogEnergyFloor = 1e-20;
std::vector<double> band_log_energies(const Spectrum& spectrum, const BandPlan& plan);

// Log band energies of consecutive half-overlapped 512-sample frames,
// row-major [band][frame]. The canonical detector input is 8 bands x 6
// frames covering 1792 samples (89.6 ms at 20 kHz).
struct FeatureMap {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::int64_t span_begin = 0;
  std::int64_t span_end = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::size_t kHifFrameLen = 512;
inline constexpr std::size_t kHifFrameHop = 256;
inline constexpr std::size_t kHifFramesPerMap = 6;
inline constexpr std::size_t kHifMapSpan = kHifFrameLen + (kHifFramesPerMap - 1) * kHifFrameHop;

FeatureMap hif_feature_map(const SampleStream& stream, std::int64_t start_index = 0);

// All maps obtainable by advancing the map window by hop_samples (default: a
// new map every three non-overlapped frames, i.e. one every 76.8 ms).
std::vector<FeatureMap> hif_feature_maps(const SampleStream& stream,
                                         std::size_t hop_samples = 1536);

}  // namespace gridmon::hif

#include "gridmon/bands.hpp"

#include <cmath>
#include <string>

#include "gridmon/errors.hpp"

namespace gridmon::hif {

BandPlan default_band_plan(double sample_rate_hz) {
  BandPlan plan;
  plan.sample_rate_hz = sample_rate_hz;
  if (sample_rate_hz == 20000.0) {
    plan.edges_hz = {0.0, 78.125, 156.25, 312.5, 625.0, 1250.0, 2500.0, 5000.0, 10000.0};
  } else if (sample_rate_hz == 10000.0) {
    plan.edges_hz = {39.0625, 78.125, 156.25, 312.5, 625.0, 1250.0, 2500.0, 5000.0};
  } else {
    throw InvalidArgument("default_band_plan: no plan for " + std::to_string(sample_rate_hz) +
                          " Hz; supported rates are 20000 and 10000");
  }
  return plan;
}

std::vector<double> band_energies(const Spectrum& spectrum, const BandPlan& plan) {
  if (plan.band_count() == 0) throw InvalidArgument("band_energies: empty plan");
  if (spectrum.bins.empty() || spectrum.resolution_hz <= 0.0)
    throw InvalidArgument("band_energies: empty spectrum");
  const std::size_t n = spectrum.bins.size();
  std::vector<double> sums(plan.band_count(), 0.0);
  std::vector<std::size_t> counts(plan.band_count(), 0);
  for (std::size_t m = 1; m <= n / 2; ++m) {
    const double f = static_cast<double>(m) * spectrum.resolution_hz;
    for (std::size_t b = 0; b < plan.band_count(); ++b) {
      const bool last = b + 1 == plan.band_count();
      if (f >= plan.edges_hz[b] && (f < plan.edges_hz[b + 1] || (last && f == plan.edges_hz[b + 1]))) {
        sums[b] += std::norm(spectrum.bins[m]);
        ++counts[b];
        break;
      }
    }
  }
  for (std::size_t b = 0; b < sums.size(); ++b)
    if (counts[b] > 0) sums[b] /= static_cast<double>(counts[b]);
  return sums;
}

std::vector<double> band_log_energies(const Spectrum& spectrum, const BandPlan& plan) {
  auto e = band_energies(spectrum, plan);
  for (double& v : e) v = std::log10(v + kLogEnergyFloor);
  return e;
}

FeatureMap hif_feature_map(const SampleStream& stream, std::int64_t start_index) {
  if (stream.sample_rate_hz != 20000.0)
    throw InvalidArgument("hif_feature_map: stream must be sampled at 20 kHz");
  if (start_index < 0 ||
      static_cast<std::size_t>(start_index) + kHifMapSpan > stream.samples.size())
    throw InvalidArgument("hif_feature_map: need " + std::to_string(kHifMapSpan) +
                          " samples past the start index");
  const auto plan = default_band_plan(stream.sample_rate_hz);
  static const WindowCoeffs window = hann_window(kHifFrameLen);

  FeatureMap map;
  map.rows = plan.band_count();
  map.cols = kHifFramesPerMap;
  map.values.assign(map.rows * map.cols, 0.0);
  map.span_begin = start_index;
  map.span_end = start_index + static_cast<std::int64_t>(kHifMapSpan);

  for (std::size_t c = 0; c < kHifFramesPerMap; ++c) {
    Frame f;
    const auto begin = static_cast<std::size_t>(start_index) + c * kHifFrameHop;
    f.values.assign(stream.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                    stream.samples.begin() + static_cast<std::ptrdiff_t>(begin + kHifFrameLen));
    f.sample_rate_hz = stream.sample_rate_hz;
    f.start_index = static_cast<std::int64_t>(begin);
    const auto logs = band_log_energies(spectrum_of(f, window), plan);
    for (std::size_t r = 0; r < map.rows; ++r) map.values[r * map.cols + c] = logs[r];
  }
  return map;
}

std::vector<FeatureMap> hif_feature_maps(const SampleStream& stream, std::size_t hop_samples) {
  if (hop_samples == 0) throw InvalidArgument("hif_feature_maps: hop must be positive");
  std::vector<FeatureMap> maps;
  for (std::size_t start = 0; start + kHifMapSpan <= stream.samples.size();
       start += hop_samples)
    maps.push_back(hif_feature_map(stream, static_cast<std::int64_t>(start)));
  return maps;
}

}  // namespace gridmon::hif

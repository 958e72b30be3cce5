#include "gridmon/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gridmon/errors.hpp"
#include "gridmon/events.hpp"
#include "gridmon/loadfeat.hpp"
#include "gridmon/rng.hpp"
#include "gridmon/sim.hpp"

namespace gridmon::corpus {

namespace {

constexpr double kFaultRate = 20000.0;
constexpr double kEventRate = 10000.0;

// Load-current amplitudes that straddle the superimposed fault streams
// (ratio x fault RMS spans roughly 0.2 to 4 A), so class identity never
// leaks through sheer scale.
constexpr double kRmsLo = 0.2;
constexpr double kRmsHi = 4.0;

std::vector<hif::FeatureMap> fault_maps(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  static constexpr sim::Surface kSurfaces[] = {sim::Surface::tree, sim::Surface::sand,
                                               sim::Surface::soil};
  static constexpr double kRatios[] = {5.0, 10.0, 20.0};
  const auto pick = seed % 9;
  auto cfg = sim::hif_preset(kSurfaces[pick % 3]);
  cfg.duration_s = duration_s;
  cfg.r_pos_ohm *= rng.uniform(0.8, 1.25);
  cfg.r_neg_ohm *= rng.uniform(0.8, 1.25);
  const auto fault = sim::gen_hif(cfg, rng.next_u64());
  const auto carried = sim::superimpose(fault, kRatios[pick / 3]);
  const auto noisy = sim::add_noise(carried, rng.uniform(35.0, 55.0), rng.next_u64());
  return hif::hif_feature_maps(noisy);
}

std::vector<hif::FeatureMap> clean_maps(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  const auto stream = sim::gen_load_current(rng.uniform(kRmsLo, kRmsHi),
                                            rng.uniform(35.0, 55.0), kFaultRate, duration_s,
                                            rng.next_u64());
  return hif::hif_feature_maps(stream);
}

std::vector<hif::FeatureMap> transient_maps(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  sim::TransientConfig cfg;
  cfg.base_rms_a = rng.uniform(kRmsLo, kRmsHi);
  cfg.sample_rate_hz = kFaultRate;
  cfg.duration_s = duration_s;

  // Place the switching edge in the first half of one map slot so the map
  // holds at least a kilo-sample of aftermath. Maps elsewhere in the stream
  // are indistinguishable from clean mains current and would poison the
  // label if kept.
  const auto n = static_cast<std::int64_t>(std::llround(duration_s * kFaultRate));
  const auto hop = static_cast<std::int64_t>(hif::kHifFrameHop * 6);
  const auto k_max = std::max<std::int64_t>(1, (n - static_cast<std::int64_t>(hif::kHifMapSpan)) / hop);
  const auto span_begin = rng.uniform_int(1, k_max) * hop;
  const auto onset = span_begin + rng.uniform_int(0, static_cast<std::int64_t>(hif::kHifMapSpan) / 2 - 128);
  cfg.at_s = static_cast<double>(onset) / kFaultRate;

  const auto kind = static_cast<sim::TransientKind>(seed % 4);
  cfg.magnitude = kind == sim::TransientKind::resistive_step ? rng.uniform(1.5, 3.0)
                                                             : rng.uniform(0.7, 1.5);
  auto stream = sim::gen_transient(kind, cfg, rng.next_u64());
  stream = sim::add_noise(stream, rng.uniform(35.0, 55.0), rng.next_u64());
  return {hif::hif_feature_map(stream, span_begin)};
}

}  // namespace

LabeledMaps build_hif_corpus(const HifCorpusOptions& opt, std::uint64_t seed) {
  if (opt.classes != 2 && opt.classes != 3) {
    throw InvalidArgument("fault corpus supports 2 or 3 classes, got " +
                          std::to_string(opt.classes));
  }
  if (opt.maps_per_class == 0 || opt.duration_s <= 0.2) {
    throw InvalidArgument("fault corpus needs maps and streams long enough to frame");
  }
  LabeledMaps out;
  out.label_names = opt.classes == 2 ? std::vector<std::string>{"hif", "healthy"}
                                     : std::vector<std::string>{"hif", "transient", "normal"};

  const auto fill = [&](std::size_t label, std::uint64_t salt, auto&& make,
                        std::size_t target) {
    std::size_t have = 0;
    for (std::uint64_t stream = 0; have < target; ++stream) {
      auto maps = make(opt.duration_s, derive_seed(seed + salt, stream));
      for (auto& m : maps) {
        if (have == target) break;
        out.maps.push_back(std::move(m));
        out.labels.push_back(label);
        ++have;
      }
    }
  };

  fill(0, 11, fault_maps, opt.maps_per_class);
  if (opt.classes == 2) {
    // healthy pools plain mains current with benign switching events
    fill(1, 22, clean_maps, opt.maps_per_class - opt.maps_per_class / 2);
    fill(1, 33, transient_maps, opt.maps_per_class / 2);
  } else {
    fill(1, 33, transient_maps, opt.maps_per_class);
    fill(2, 22, clean_maps, opt.maps_per_class);
  }
  return out;
}

const std::vector<std::string>& appliance_class_names() {
  static const std::vector<std::string> names = {
      "kettle",           "space_heater", "incandescent_bank", "fridge_compressor",
      "washer_motor",     "microwave_psu", "pfc_capacitor"};
  return names;
}

namespace {

struct ApplianceRecipe {
  sim::TransientKind kind;
  double base_rms_a;
  double mag_lo;
  double mag_hi;
};

// Step classes sit on disjoint active-power bands; the motor pair differs by
// an order of magnitude in machine size; the last two are near-zero-delta
// events told apart by their spectral signature.
const ApplianceRecipe kRecipes[7] = {
    {sim::TransientKind::resistive_step, 10.0, 2.8, 3.2},   // kettle
    {sim::TransientKind::resistive_step, 10.0, 1.9, 2.1},   // space_heater
    {sim::TransientKind::resistive_step, 10.0, 1.2, 1.4},   // incandescent_bank
    {sim::TransientKind::motor_start, 1.5, 0.8, 1.2},       // fridge_compressor
    {sim::TransientKind::motor_start, 10.0, 0.8, 1.2},      // washer_motor
    {sim::TransientKind::inrush, 10.0, 0.8, 1.2},           // microwave_psu
    {sim::TransientKind::capacitor_switch, 10.0, 0.8, 1.2}, // pfc_capacitor
};

}  // namespace

LabeledFeatures build_load_corpus(const LoadCorpusOptions& opt, std::uint64_t seed) {
  if (opt.events_per_class == 0) throw InvalidArgument("load corpus needs events");
  LabeledFeatures out;
  out.label_names = appliance_class_names();

  const double duration_s = 3.0;
  const auto n = static_cast<std::size_t>(duration_s * kEventRate);
  SampleStream voltage;
  voltage.sample_rate_hz = kEventRate;
  voltage.channel = Channel::voltage;
  voltage.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    voltage.samples[t] = 230.0 * std::numbers::sqrt2 *
                         std::sin(2.0 * std::numbers::pi * 50.0 * static_cast<double>(t) /
                                  kEventRate);
  }

  for (std::size_t cls = 0; cls < out.label_names.size(); ++cls) {
    const auto& recipe = kRecipes[cls];
    for (std::size_t e = 0; e < opt.events_per_class; ++e) {
      Rng rng(derive_seed(seed + cls * 101, e));
      sim::TransientConfig cfg;
      cfg.base_rms_a = recipe.base_rms_a;
      cfg.sample_rate_hz = kEventRate;
      cfg.duration_s = duration_s;
      cfg.at_s = rng.uniform(0.7, 0.9);
      cfg.magnitude = rng.uniform(recipe.mag_lo, recipe.mag_hi);
      auto current = sim::gen_transient(recipe.kind, cfg, rng.next_u64());
      current = sim::add_noise(current, rng.uniform(38.0, 46.0), rng.next_u64());

      const auto onset = static_cast<std::int64_t>(std::llround(cfg.at_s * kEventRate));
      const auto frame = events::extract_transient(current, onset + 256);
      // Motor inrush tails can take over a second to die out; the settling
      // span here keeps the post window on genuinely steady current.
      const auto delta =
          loadfeat::power_delta_around(voltage, current, onset, onset + 15000, 50.0);
      const auto fv = loadfeat::load_feature_vector(frame, delta.delta_p, delta.delta_q);
      out.features.push_back(fv.as_array());
      out.labels.push_back(cls);
    }
  }
  return out;
}

nn::Dataset to_dataset(const LabeledMaps& maps) {
  if (maps.maps.empty()) throw InvalidArgument("corpus holds no maps");
  const std::size_t n = maps.maps.size();
  const std::size_t rows = maps.maps.front().rows;
  const std::size_t cols = maps.maps.front().cols;
  const std::size_t k = maps.label_names.size();
  nn::Dataset ds;
  ds.inputs = nn::Tensor({n, 1, rows, cols});
  ds.targets = nn::Tensor({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = maps.maps[i];
    if (m.rows != rows || m.cols != cols) {
      throw ShapeError("map " + std::to_string(i) + " is " + std::to_string(m.rows) + "x" +
                       std::to_string(m.cols) + ", corpus is " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
    std::copy(m.values.begin(), m.values.end(),
              ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * rows * cols));
    ds.targets[i * k + maps.labels[i]] = 1.0;
  }
  return ds;
}

nn::Dataset to_dataset(const LabeledFeatures& features) {
  if (features.features.empty()) throw InvalidArgument("corpus holds no features");
  const std::size_t n = features.features.size();
  const std::size_t k = features.label_names.size();
  nn::Dataset ds;
  ds.inputs = nn::Tensor({n, 9});
  ds.targets = nn::Tensor({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(features.features[i].begin(), features.features[i].end(),
              ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * 9));
    ds.targets[i * k + features.labels[i]] = 1.0;
  }
  return ds;
}

std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& all,
                                                  double holdout_fraction,
                                                  std::uint64_t seed) {
  const std::size_t n = all.size();
  if (n < 2) throw InvalidArgument("cannot split " + std::to_string(n) + " samples");
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
    throw InvalidArgument("holdout fraction must sit in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t hold = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        std::llround(holdout_fraction *
                                                                     static_cast<double>(n))));
  const std::size_t keep = n - hold;
  const std::size_t in_per = all.inputs.numel() / n;
  const std::size_t tg_per = all.targets.numel() / n;

  const auto gather = [&](std::size_t begin, std::size_t count) {
    nn::Dataset ds;
    auto ishape = all.inputs.shape;
    auto tshape = all.targets.shape;
    ishape[0] = count;
    tshape[0] = count;
    ds.inputs = nn::Tensor(ishape);
    ds.targets = nn::Tensor(tshape);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[begin + i];
      std::copy_n(all.inputs.data.begin() + static_cast<std::ptrdiff_t>(src * in_per), in_per,
                  ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * in_per));
      std::copy_n(all.targets.data.begin() + static_cast<std::ptrdiff_t>(src * tg_per), tg_per,
                  ds.targets.data.begin() + static_cast<std::ptrdiff_t>(i * tg_per));
    }
    return ds;
  };
  return {gather(0, keep), gather(keep, hold)};
}

}  // namespace gridmon::corpus

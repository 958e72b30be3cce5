#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridmon/bands.hpp"
#include "gridmon/nn.hpp"

namespace gridmon::corpus {

// Labelled fault-detector inputs. label_names fixes the class index order
// used everywhere downstream (models, verdicts, confusion rows).
struct LabeledMaps {
  std::vector<hif::FeatureMap> maps;
  std::vector<std::size_t> labels;
  std::vector<std::string> label_names;
};

struct HifCorpusOptions {
  int classes = 2;                 // 2: {hif, healthy}  3: {hif, transient, normal}
  std::size_t maps_per_class = 1400;
  double duration_s = 1.0;         // per generated stream
};

// Balanced synthetic corpus at 20 kHz. Fault streams walk the surface and
// load-ratio grids round-robin; healthy material is clean mains current plus
// switching transients (only maps overlapping the burst are kept, a plain
// sinusoid labelled "transient" would poison training).
LabeledMaps build_hif_corpus(const HifCorpusOptions& opt, std::uint64_t seed);

// Labelled nine-dimensional switching-event features.
struct LabeledFeatures {
  std::vector<std::array<double, 9>> features;
  std::vector<std::size_t> labels;
  std::vector<std::string> label_names;
};

// The seven appliance archetypes the load identifier distinguishes, in class
// index order.
const std::vector<std::string>& appliance_class_names();

struct LoadCorpusOptions {
  std::size_t events_per_class = 220;
};

// One switching event per entry: a 3 s current record at 10 kHz with a
// class-specific transient at a jittered onset, measurement noise, and the
// feature vector extracted exactly the way the live pipeline does it.
LabeledFeatures build_load_corpus(const LoadCorpusOptions& opt, std::uint64_t seed);

// One-hot datasets for the training loop.
nn::Dataset to_dataset(const LabeledMaps& maps);
nn::Dataset to_dataset(const LabeledFeatures& features);

// Seeded shuffle, then the first (1 - holdout_fraction) goes to train.
std::pair<nn::Dataset, nn::Dataset> split_dataset(const nn::Dataset& all,
                                                  double holdout_fraction,
                                                  std::uint64_t seed);

}  // namespace gridmon::corpus

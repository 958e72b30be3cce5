#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridmon/bands.hpp"
#include "gridmon/corpus.hpp"
#include "gridmon/nn.hpp"

namespace gridmon::detect {

struct BinaryCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

// Percentages; a metric whose denominator is zero is reported unset rather
// than zero.
struct MetricReport {
  std::optional<double> accuracy;
  std::optional<double> dependability;  // TP / (TP + FP)
  std::optional<double> security;       // TN / (TN + FN)
  std::optional<double> safety;         // TN / (TN + FN)
  std::optional<double> sensibility;    // TP / (TP + FN)
  std::string note;
};

MetricReport evaluate(const BinaryCounts& counts);

// Row-normalised percentages of a k x k confusion table (true class per row).
// A row with no observations normalises to zeros.
std::vector<std::vector<double>> evaluate_multiclass(
    const std::vector<std::vector<std::size_t>>& table);

// The band-map classifier: 1x8x6 input, two small convolution blocks with
// batch normalisation, a 12-wide flatten and a softmax head. 168 trainable
// values at classes=2.
nn::Network build_hif_cnn(int classes, std::uint64_t seed);

// Feature-vector classifier: 9 -> hidden -> relu -> classes -> softmax.
nn::Network build_load_mlp(std::size_t hidden, std::size_t classes, std::uint64_t seed);

// Per-dimension affine feature scaling fitted on training data and persisted
// in the model's meta tables so inference reproduces it exactly.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const nn::Tensor& inputs);
  nn::Tensor apply(const nn::Tensor& inputs) const;
  void stamp(nn::Network& net) const;
  static std::optional<Standardizer> from(const nn::Network& net);
};

struct HifVerdict {
  std::size_t class_index = 0;
  std::string label;
  double probability = 0.0;  // softmax mass of the chosen label
  std::int64_t span_begin = 0;
  std::int64_t span_end = 0;
  bool untrained = false;  // set when the model was never run through training
};

HifVerdict classify_hif(const hif::FeatureMap& map, nn::Network& model);

struct LoadVerdict {
  std::size_t class_index = 0;
  std::string label;
  double probability = 0.0;
  bool untrained = false;
};

LoadVerdict classify_load(const std::array<double, 9>& features, nn::Network& model);

struct FitOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 1;
};

// A trained model plus its held-out quality figures.
struct TrainedModel {
  nn::Network net;
  std::vector<double> loss_history;
  std::vector<std::vector<std::size_t>> confusion;  // true class per row
  double holdout_accuracy = 0.0;                    // fraction in [0, 1]
};

TrainedModel train_hif_model(const corpus::LabeledMaps& corpus, const FitOptions& opt);
TrainedModel train_load_model(const corpus::LabeledFeatures& corpus, const FitOptions& opt);

}  // namespace gridmon::detect

#include "gridmon/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridmon/errors.hpp"

namespace gridmon::detect {

namespace {

constexpr const char* kDuplicateNote =
    "security and safety are computed identically (both TN/(TN+FN))";

std::optional<double> percent(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::string> split_labels(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(csv.substr(start));
      break;
    }
    out.push_back(csv.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string csv;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) csv += ",";
    csv += labels[i];
  }
  return csv;
}

struct Pick {
  std::size_t index;
  double probability;
};

Pick argmax_row(const nn::Tensor& out) {
  Pick p{0, out[0]};
  for (std::size_t i = 1; i < out.numel(); ++i) {
    if (out[i] > p.probability) p = {i, out[i]};
  }
  return p;
}

}  // namespace

MetricReport evaluate(const BinaryCounts& c) {
  if (c.total() == 0) throw InvalidArgument("confusion counts are all zero");
  MetricReport r;
  r.accuracy = percent(c.tp + c.tn, c.total());
  r.dependability = percent(c.tp, c.tp + c.fp);
  r.security = percent(c.tn, c.tn + c.fn);
  r.safety = percent(c.tn, c.tn + c.fn);
  r.sensibility = percent(c.tp, c.tp + c.fn);
  r.note = kDuplicateNote;
  return r;
}

std::vector<std::vector<double>> evaluate_multiclass(
    const std::vector<std::vector<std::size_t>>& table) {
  if (table.size() < 2) {
    throw InvalidArgument("multiclass table needs at least 2 classes, got " +
                          std::to_string(table.size()));
  }
  for (const auto& row : table) {
    if (row.size() != table.size()) {
      throw InvalidArgument("multiclass table must be square");
    }
  }
  std::vector<std::vector<double>> out(table.size(),
                                       std::vector<double>(table.size(), 0.0));
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto sum = std::accumulate(table[r].begin(), table[r].end(), std::size_t{0});
    if (sum == 0) continue;  // empty row stays all zero
    for (std::size_t c = 0; c < table.size(); ++c) {
      out[r][c] = 100.0 * static_cast<double>(table[r][c]) / static_cast<double>(sum);
    }
  }
  return out;
}

nn::Network build_hif_cnn(int classes, std::uint64_t seed) {
  if (classes != 2 && classes != 3) {
    throw InvalidArgument("fault classifier supports 2 or 3 classes, got " +
                          std::to_string(classes));
  }
  nn::Network net({1, 8, 6},
                  {nn::conv2d(4, 1, 2, 2), nn::batchnorm(4), nn::relu(), nn::maxpool2x2(),
                   nn::conv2d(6, 4, 2, 2), nn::batchnorm(6), nn::relu(),
                   nn::dense(12, static_cast<std::size_t>(classes)), nn::softmax()},
                  seed);
  net.meta_text["labels"] = classes == 2 ? "hif,healthy" : "hif,transient,normal";
  net.meta_text["task"] = classes == 2 ? "hif2" : "hif3";
  return net;
}

nn::Network build_load_mlp(std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  if (hidden < 1) throw InvalidArgument("hidden width must be at least 1");
  if (classes < 2) throw InvalidArgument("classifier needs at least 2 classes");
  nn::Network net({9}, {nn::dense(9, hidden), nn::relu(), nn::dense(hidden, classes),
                        nn::softmax()},
                  seed);
  net.meta_text["task"] = "loadid";
  return net;
}

Standardizer Standardizer::fit(const nn::Tensor& inputs) {
  if (inputs.shape.empty() || inputs.shape[0] == 0) {
    throw InvalidArgument("cannot fit a standardizer on an empty tensor");
  }
  const std::size_t n = inputs.shape[0];
  const std::size_t d = inputs.numel() / n;
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += inputs[i * d + j];
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = inputs[i * d + j] - s.mean[j];
      s.stddev[j] += dv * dv;
    }
  for (double& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-9) v = 1.0;  // constant feature, leave it centred only
  }
  return s;
}

nn::Tensor Standardizer::apply(const nn::Tensor& inputs) const {
  const std::size_t n = inputs.shape.empty() ? 0 : inputs.shape[0];
  if (n == 0 || inputs.numel() / n != mean.size()) {
    throw ShapeError("standardizer fitted for " + std::to_string(mean.size()) +
                     " features, got tensor " + nn::shape_str(inputs.shape));
  }
  nn::Tensor out = inputs;
  const std::size_t d = mean.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = (out[i * d + j] - mean[j]) / stddev[j];
  return out;
}

void Standardizer::stamp(nn::Network& net) const {
  net.meta_values["feature_mean"] = mean;
  net.meta_values["feature_std"] = stddev;
}

std::optional<Standardizer> Standardizer::from(const nn::Network& net) {
  const auto m = net.meta_values.find("feature_mean");
  const auto s = net.meta_values.find("feature_std");
  if (m == net.meta_values.end() || s == net.meta_values.end()) return std::nullopt;
  if (m->second.size() != s->second.size()) return std::nullopt;
  Standardizer out;
  out.mean = m->second;
  out.stddev = s->second;
  return out;
}

namespace {

// Shared classify path: standardize, run inference, read labels from meta.
template <class Verdict>
Verdict classify(nn::Tensor input, nn::Network& model) {
  if (const auto std = Standardizer::from(model)) input = std->apply(input);
  const auto out = model.forward(input, nn::Mode::infer);
  const auto pick = argmax_row(out);
  Verdict v;
  v.class_index = pick.index;
  v.probability = pick.probability;
  const auto labels_it = model.meta_text.find("labels");
  if (labels_it != model.meta_text.end()) {
    const auto labels = split_labels(labels_it->second);
    if (pick.index < labels.size()) v.label = labels[pick.index];
  }
  if (v.label.empty()) v.label = "class" + std::to_string(pick.index);
  v.untrained = !model.meta_text.contains("trained");
  return v;
}

}  // namespace

HifVerdict classify_hif(const hif::FeatureMap& map, nn::Network& model) {
  if (map.rows != 8 || map.cols != 6) {
    throw ShapeError("fault classifier expects 8x6 maps, got " + std::to_string(map.rows) +
                     "x" + std::to_string(map.cols));
  }
  nn::Tensor in({1, 1, map.rows, map.cols});
  in.data = map.values;
  auto v = classify<HifVerdict>(std::move(in), model);
  v.span_begin = map.span_begin;
  v.span_end = map.span_end;
  return v;
}

LoadVerdict classify_load(const std::array<double, 9>& features, nn::Network& model) {
  nn::Tensor in({1, 9});
  std::copy(features.begin(), features.end(), in.data.begin());
  return classify<LoadVerdict>(std::move(in), model);
}

namespace {

TrainedModel fit_classifier(nn::Network net, const nn::Dataset& all,
                            const std::vector<std::string>& labels, const FitOptions& opt) {
  auto [train_set, holdout] = corpus::split_dataset(all, opt.holdout_fraction, opt.seed);

  const auto std = Standardizer::fit(train_set.inputs);
  train_set.inputs = std.apply(train_set.inputs);
  holdout.inputs = std.apply(holdout.inputs);

  TrainedModel out{std::move(net), {}, {}, 0.0};
  std.stamp(out.net);
  out.net.meta_text["labels"] = join_labels(labels);

  nn::TrainConfig cfg;
  cfg.optimizer = nn::Optimizer::adam;
  cfg.learning_rate = opt.learning_rate;
  cfg.batch_size = opt.batch_size;
  cfg.epochs = opt.epochs;
  cfg.seed = opt.seed;
  out.loss_history = nn::train(out.net, train_set, cfg);
  out.net.meta_text["trained"] = "1";

  const std::size_t k = labels.size();
  out.confusion.assign(k, std::vector<std::size_t>(k, 0));
  const auto pred = out.net.forward(holdout.inputs, nn::Mode::infer);
  const std::size_t n = holdout.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t want = 0, got = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (holdout.targets[i * k + c] > holdout.targets[i * k + want]) want = c;
      if (pred[i * k + c] > pred[i * k + got]) got = c;
    }
    out.confusion[want][got]++;
    correct += want == got;
  }
  out.holdout_accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return out;
}

}  // namespace

TrainedModel train_hif_model(const corpus::LabeledMaps& data, const FitOptions& opt) {
  const int classes = static_cast<int>(data.label_names.size());
  return fit_classifier(build_hif_cnn(classes, opt.seed), corpus::to_dataset(data),
                        data.label_names, opt);
}

TrainedModel train_load_model(const corpus::LabeledFeatures& data, const FitOptions& opt) {
  return fit_classifier(build_load_mlp(16, data.label_names.size(), opt.seed),
                        corpus::to_dataset(data), data.label_names, opt);
}

}  // namespace gridmon::detect

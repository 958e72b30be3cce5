#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gridmon::nn {

// Dense row-major value block. Index 0 is the batch dimension wherever a
// tensor crosses a layer boundary.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  std::size_t numel() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

enum class LayerKind {
  conv2d,
  conv1d,
  transposed_conv1d,
  batchnorm,
  relu,
  maxpool2x2,
  dense,
  softmax,
};

const char* layer_kind_name(LayerKind k);

// One layer of a sequential network. Only the fields its kind reads are
// meaningful; everything else stays zero.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t filters = 0;       // conv2d/conv1d output channels
  std::size_t in_channels = 0;   // conv*/transposed input channels
  std::size_t out_channels = 0;  // transposed_conv1d output channels
  std::size_t kernel_h = 0;      // conv2d
  std::size_t kernel_w = 0;      // conv2d
  std::size_t kernel = 0;        // conv1d/transposed_conv1d
  std::size_t stride = 1;
  std::size_t channels = 0;      // batchnorm
  std::size_t in_features = 0;   // dense
  std::size_t out_features = 0;  // dense
};

LayerSpec conv2d(std::size_t filters, std::size_t in_channels, std::size_t kernel_h,
                 std::size_t kernel_w, std::size_t stride = 1);
LayerSpec conv1d(std::size_t filters, std::size_t in_channels, std::size_t kernel,
                 std::size_t stride = 1);
LayerSpec transposed_conv1d(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel, std::size_t stride = 1);
LayerSpec batchnorm(std::size_t channels);
LayerSpec relu();
LayerSpec maxpool2x2();
LayerSpec dense(std::size_t in_features, std::size_t out_features);
LayerSpec softmax();

enum class Mode { train, infer };

// A sequential network with per-layer parameter tensors, cached forward
// activations, and the gradients the last backward pass produced. Forward and
// backward on one instance are a single-context pair; clone instances for
// parallel use.
class Network {
 public:
  Network() = default;

  // Validates the whole shape chain against per_sample_input and initialises
  // parameters (He-scaled normals for weights, zeros for biases, identity for
  // batchnorm) from the seed.
  Network(std::vector<std::size_t> per_sample_input, std::vector<LayerSpec> layer_specs,
          std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  std::vector<std::size_t> output_shape() const;  // per sample

  // Trainable tensors of one layer: {W, b} for conv/dense, {gamma, beta} for
  // batchnorm, empty otherwise. Gradients mirror this layout after backward().
  std::vector<Tensor>& params(std::size_t layer) { return params_[layer]; }
  const std::vector<Tensor>& params(std::size_t layer) const { return params_[layer]; }
  std::vector<Tensor>& grads(std::size_t layer) { return grads_[layer]; }
  const std::vector<Tensor>& grads(std::size_t layer) const { return grads_[layer]; }

  // Batchnorm running statistics {mean, var}; empty for other kinds.
  std::vector<Tensor>& state(std::size_t layer) { return state_[layer]; }
  const std::vector<Tensor>& state(std::size_t layer) const { return state_[layer]; }

  std::size_t parameter_count() const;

  // Batched forward pass; input shape must be {N} + input_shape(). Train mode
  // uses batch statistics in batchnorm layers and refreshes running stats.
  Tensor forward(const Tensor& batch, Mode mode = Mode::infer);

  // Gradient of the scalar loss w.r.t. every parameter (stored in grads())
  // and w.r.t. the forward input (returned). Requires a preceding forward.
  Tensor backward(const Tensor& output_grad);

  // Named side-channel values persisted with the model (e.g. feature
  // standardisation constants, label order).
  std::map<std::string, std::vector<double>> meta_values;
  std::map<std::string, std::string> meta_text;

 private:
  friend Network load_network(std::istream&);

  std::vector<std::size_t> input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<Tensor>> params_;
  std::vector<std::vector<Tensor>> grads_;
  std::vector<std::vector<Tensor>> state_;

  // forward cache
  bool have_forward_ = false;
  Mode forward_mode_ = Mode::infer;
  std::vector<Tensor> acts_;                    // acts_[i] feeds layer i
  std::vector<std::vector<Tensor>> aux_;        // per-layer extras for backward
  std::vector<std::vector<std::size_t>> pool_;  // argmax routing
};

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d prediction, same shape as the prediction
};

// Summed one-hot cross entropy over the batch; predictions must be rows of a
// probability simplex (each row sums to 1 within 1e-6, entries nonnegative).
LossResult cross_entropy(const Tensor& pred, const Tensor& target);

// Mean of squared errors over every element.
LossResult mse(const Tensor& pred, const Tensor& target);

// KL divergence of N(mu, diag(exp(logvar))) from N(0, I), summed over all
// elements. grad is w.r.t. mu; grad_logvar carries the second half.
struct KlResult {
  double value = 0.0;
  Tensor grad_mu;
  Tensor grad_logvar;
};
KlResult kl_gaussian(const Tensor& mu, const Tensor& logvar);

enum class LossKind { cross_entropy, mse };

struct Sgd {
  double learning_rate = 0.01;
  void step(Network& net) const;
};

// Bias-corrected Adam. One instance owns the moment slots for one network;
// reusing it across networks mixes state.
class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {}

  void step(Network& net);

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<Tensor>> m_, v_;
};

enum class Optimizer { sgd, adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Sample-major training data: inputs {N, ...}, targets {N, ...}.
struct Dataset {
  Tensor inputs;
  Tensor targets;
  std::size_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

// Seeded mini-batch loop; returns the mean per-sample loss of each epoch.
// A trailing batch smaller than batch_size is dropped when at least one full
// batch exists, so batchnorm always sees the statistics it needs.
std::vector<double> train(Network& net, const Dataset& data, const TrainConfig& cfg);

// Central finite-difference gradients of the configured loss w.r.t. every
// parameter, laid out exactly like Network::grads(). The reference for the
// analytic backward pass.
std::vector<std::vector<Tensor>> fd_param_gradients(Network& net, const Tensor& input,
                                                    const Tensor& target, LossKind loss,
                                                    Mode mode, double h = 1e-5);

// max over parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-6).
double max_grad_rel_error(Network& net, const Tensor& input, const Tensor& target,
                          LossKind loss, Mode mode, double h = 1e-5);

// Versioned model file: structured text with base64 little-endian f64 blobs.
void save_network(const Network& net, std::ostream& out);
void save_network(const Network& net, const std::string& path);
Network load_network(std::istream& in);
Network load_network(const std::string& path);

}  // namespace gridmon::nn

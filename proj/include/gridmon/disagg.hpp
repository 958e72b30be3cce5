#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gridmon/nn.hpp"
#include "gridmon/sim.hpp"

namespace gridmon::disagg {

// Fixed-length aggregate/appliance window pairs, already normalised for the
// model: inputs are per-window standardised, targets share the window's scale
// but keep a true zero so empty windows stay learnable.
struct WindowSet {
  nn::Tensor inputs;          // {N, T}
  nn::Tensor targets;         // {N, T}
  std::vector<double> offset; // per-window input mean, watts
  std::vector<double> scale;  // per-window input deviation, watts (floored)
  std::string appliance;      // device the targets describe, empty = unknown

  std::size_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
  std::size_t window() const { return inputs.shape.size() < 2 ? 0 : inputs.shape[1]; }
};

// Normalise one aggregate window; target_w may be empty (treated as zeros).
// Both spans must have the window length.
void append_window(WindowSet& set, std::span<const double> aggregate_w,
                   std::span<const double> target_w);

struct DisaggCorpusOptions {
  sim::Appliance appliance = sim::Appliance::kettle;
  std::size_t windows = 2000;
  std::size_t window = 64;          // samples at one per 6 seconds
  int max_background = 4;           // other appliances per window, 1..max
  double with_target_fraction = 0.5;
};

WindowSet build_disagg_corpus(const DisaggCorpusOptions& opt, std::uint64_t seed);

struct CvaeSpec {
  std::size_t window = 64;  // T
  std::size_t latent = 16;  // D
  double kl_weight = 0.1;
};

// Conditional variational autoencoder over power windows. The encoder maps a
// window to a diagonal Gaussian over the latent code; training samples the
// code with the reparameterisation z = mu + sigma * eps, inference uses the
// mean. Reconstruction cost is the mean square error over the window,
// regularised by the per-window divergence of the code distribution from a
// unit Gaussian.
class Cvae {
 public:
  Cvae(const CvaeSpec& spec, std::uint64_t seed);

  const CvaeSpec& spec() const { return spec_; }
  nn::Network& encoder() { return encoder_; }
  nn::Network& decoder() { return decoder_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }

  struct LossParts {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
  };

  // Forward loss under an explicit noise draw eps {B, D}. Does not touch
  // gradients; the probe side of a finite-difference check.
  LossParts loss_for(const nn::Tensor& inputs, const nn::Tensor& targets,
                     const nn::Tensor& eps);

  // Forward plus backward under the same contract; leaves parameter
  // gradients in both networks ready for an optimizer step.
  LossParts backprop(const nn::Tensor& inputs, const nn::Tensor& targets,
                     const nn::Tensor& eps);

  // Mean-code reconstruction, normalised units, {B, T}.
  nn::Tensor reconstruct(const nn::Tensor& inputs);

  bool trained = false;
  std::string appliance;  // device this model estimates, empty until trained

 private:
  Cvae() = default;
  friend Cvae load_cvae(std::istream& in);

  LossParts compute(const nn::Tensor& inputs, const nn::Tensor& targets,
                    const nn::Tensor& eps, bool with_grads);

  CvaeSpec spec_;
  nn::Network encoder_;
  nn::Network decoder_;
};

// Diagonal Gaussian over the latent code for one window, plus the draw used
// to sample it. Variances are kept as log values so they stay positive.
struct LatentParams {
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> eps;  // filled by reparameterize
  std::vector<double> z;    // filled by reparameterize
};

// Posterior parameters for one normalised window of length T.
LatentParams encode(Cvae& model, std::span<const double> x_norm);

// Draw eps ~ N(0, I) under the seed and form z = mu + exp(logvar / 2) * eps.
std::vector<double> reparameterize(LatentParams& params, std::uint64_t seed);

// Normalised appliance estimate of length T for one latent code.
std::vector<double> decode(Cvae& model, std::span<const double> z);

// Single-window objective under an explicit divergence weight: mean square
// estimation error plus weight times the closed-form divergence.
Cvae::LossParts cvae_loss(Cvae& model, std::span<const double> x_norm,
                          std::span<const double> y_norm, double kl_weight,
                          std::uint64_t seed);

struct DisaggTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Seeded mini-batch loop over the window set; returns the mean batch
// objective for each epoch. Marks the model trained and stamps the data's
// appliance label on it; a model cannot mix appliances across calls.
std::vector<double> train_cvae(Cvae& model, const WindowSet& data,
                               const DisaggTrainConfig& cfg);

// De-normalised appliance estimate for one aggregate window, watts, clamped
// to be non-negative.
std::vector<double> disaggregate_window(Cvae& model, std::span<const double> aggregate_w);

// Mean absolute error between aligned power sequences, watts.
double mae(std::span<const double> truth_w, std::span<const double> estimate_w);

// Relative total-energy error |sum(estimate) - sum(truth)| / sum(truth).
// Undefined when the true sequence carries no energy.
double sae(std::span<const double> truth_w, std::span<const double> estimate_w);

struct DisaggScore {
  double mae_w = 0.0;  // mean absolute error per sample, watts
  double sae = 0.0;    // |estimated - true| total energy, relative
};

// Evaluate a model on a window set in watt units.
DisaggScore score_disagg(Cvae& model, const WindowSet& data);

void save_cvae(const Cvae& model, std::ostream& out);
void save_cvae(const Cvae& model, const std::string& path);
Cvae load_cvae(std::istream& in);
Cvae load_cvae(const std::string& path);

}  // namespace gridmon::disagg

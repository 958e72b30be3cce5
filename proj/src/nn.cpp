#include "gridmon/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gridmon/errors.hpp"
#include "gridmon/rng.hpp"
#include "json.hpp"

namespace gridmon::nn {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::size_t> batched(std::size_t n, const std::vector<std::size_t>& per_sample) {
  std::vector<std::size_t> s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

// Per-sample channel/length view of a possibly flattened 1-D tensor.
struct Dims1d {
  std::size_t n, c, l;
};

Dims1d dims1d(const Tensor& t, std::size_t channels, const char* who) {
  if (t.shape.size() < 2 || t.shape[0] == 0) {
    throw ShapeError(std::string(who) + " needs a batched input, got shape " +
                     shape_str(t.shape));
  }
  const std::size_t per = t.numel() / t.shape[0];
  if (channels == 0 || per % channels != 0) {
    throw ShapeError(std::string(who) + ": per-sample size " + std::to_string(per) +
                     " is not divisible into " + std::to_string(channels) + " channels");
  }
  return {t.shape[0], channels, per / channels};
}

struct Dims2d {
  std::size_t n, c, h, w;
};

Dims2d dims2d(const Tensor& t, const char* who) {
  if (t.shape.size() != 4) {
    throw ShapeError(std::string(who) + " needs a {N,C,H,W} input, got shape " +
                     shape_str(t.shape));
  }
  return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
}

// Base64 with the standard alphabet; blobs carry little-endian f64 words.
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * sizeof(double));
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t rem = bytes.size() - i;
    const unsigned b0 = bytes[i];
    const unsigned b1 = rem > 1 ? bytes[i + 1] : 0;
    const unsigned b2 = rem > 2 ? bytes[i + 2] : 0;
    out.push_back(kB64[b0 >> 2]);
    out.push_back(kB64[((b0 & 0x3) << 4) | (b1 >> 4)]);
    out.push_back(rem > 1 ? kB64[((b1 & 0xF) << 2) | (b2 >> 6)] : '=');
    out.push_back(rem > 2 ? kB64[b2 & 0x3F] : '=');
  }
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw FormatError("base64 blob length is not a multiple of 4");
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char ch = text[i + j];
      if (ch == '=') {
        if (i + 4 != text.size() || j < 2) throw FormatError("misplaced base64 padding");
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = lut[static_cast<unsigned char>(ch)];
        if (vals[j] < 0) throw FormatError("invalid base64 character");
        if (pad > 0) throw FormatError("base64 data after padding");
      }
    }
    bytes.push_back(static_cast<unsigned char>((vals[0] << 2) | (vals[1] >> 4)));
    if (pad < 2) bytes.push_back(static_cast<unsigned char>(((vals[1] & 0xF) << 4) | (vals[2] >> 2)));
    if (pad < 1) bytes.push_back(static_cast<unsigned char>(((vals[2] & 0x3) << 6) | vals[3]));
  }
  if (bytes.size() % sizeof(double) != 0)
    throw FormatError("base64 blob does not hold whole 64-bit words");
  std::vector<double> values(bytes.size() / sizeof(double));
  if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kLogClamp = 1e-12;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(shape_numel(shape), 0.0);
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "{";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "}";
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::transposed_conv1d: return "transposed_conv1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerSpec conv2d(std::size_t filters, std::size_t in_channels, std::size_t kernel_h,
                 std::size_t kernel_w, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.filters = filters;
  s.in_channels = in_channels;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.stride = stride;
  return s;
}

LayerSpec conv1d(std::size_t filters, std::size_t in_channels, std::size_t kernel,
                 std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv1d;
  s.filters = filters;
  s.in_channels = in_channels;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec transposed_conv1d(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::transposed_conv1d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec batchnorm(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.channels = channels;
  return s;
}

LayerSpec relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec maxpool2x2() {
  LayerSpec s;
  s.kind = LayerKind::maxpool2x2;
  return s;
}

LayerSpec dense(std::size_t in_features, std::size_t out_features) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

LayerSpec softmax() {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  return s;
}

namespace {

// Per-sample shape transition; throws ShapeError with the layer index baked
// in by the caller.
std::vector<std::size_t> walk_shape(const LayerSpec& l, std::vector<std::size_t> in) {
  const auto fail = [&](const std::string& why) {
    throw ShapeError(std::string(layer_kind_name(l.kind)) + ": " + why + " (input " +
                     shape_str(in) + ")");
  };
  const std::size_t per = shape_numel(in);
  switch (l.kind) {
    case LayerKind::conv2d: {
      if (l.stride < 1) fail("stride must be >= 1");
      if (in.size() != 3) fail("expects {C,H,W} samples");
      if (in[0] != l.in_channels) fail("channel count mismatch");
      if (in[1] < l.kernel_h || in[2] < l.kernel_w) fail("kernel larger than input");
      if (l.filters == 0 || l.kernel_h == 0 || l.kernel_w == 0) fail("empty filter bank");
      return {l.filters, (in[1] - l.kernel_h) / l.stride + 1,
              (in[2] - l.kernel_w) / l.stride + 1};
    }
    case LayerKind::conv1d: {
      if (l.stride < 1) fail("stride must be >= 1");
      if (l.filters == 0 || l.kernel == 0 || l.in_channels == 0) fail("empty filter bank");
      if (per % l.in_channels != 0) fail("sample size not divisible by channels");
      const std::size_t len = per / l.in_channels;
      if (len < l.kernel) fail("kernel larger than input");
      return {l.filters, (len - l.kernel) / l.stride + 1};
    }
    case LayerKind::transposed_conv1d: {
      if (l.stride < 1) fail("stride must be >= 1");
      if (l.out_channels == 0 || l.kernel == 0 || l.in_channels == 0) fail("empty filter bank");
      if (per % l.in_channels != 0) fail("sample size not divisible by channels");
      const std::size_t len = per / l.in_channels;
      if (len == 0) fail("empty input");
      return {l.out_channels, (len - 1) * l.stride + l.kernel};
    }
    case LayerKind::batchnorm: {
      if (in.empty() || in[0] != l.channels) fail("channel count mismatch");
      return in;
    }
    case LayerKind::relu:
      return in;
    case LayerKind::maxpool2x2: {
      if (in.size() != 3) fail("expects {C,H,W} samples");
      if (in[1] < 2 || in[2] < 2) fail("input smaller than a pooling region");
      return {in[0], in[1] / 2, in[2] / 2};
    }
    case LayerKind::dense: {
      if (per != l.in_features) fail("flattened size != in_features");
      if (l.out_features == 0) fail("empty output");
      return {l.out_features};
    }
    case LayerKind::softmax: {
      if (in.size() != 1) fail("expects per-sample vectors");
      return in;
    }
  }
  fail("unknown layer kind");
  return {};
}

std::vector<std::vector<std::size_t>> expected_param_shapes(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv2d:
      return {{l.filters, l.in_channels, l.kernel_h, l.kernel_w}, {l.filters}};
    case LayerKind::conv1d:
      return {{l.filters, l.in_channels, l.kernel}, {l.filters}};
    case LayerKind::transposed_conv1d:
      return {{l.in_channels, l.out_channels, l.kernel}, {l.out_channels}};
    case LayerKind::batchnorm:
      return {{l.channels}, {l.channels}};
    case LayerKind::dense:
      return {{l.out_features, l.in_features}, {l.out_features}};
    default:
      return {};
  }
}

std::vector<std::vector<std::size_t>> expected_state_shapes(const LayerSpec& l) {
  if (l.kind == LayerKind::batchnorm) return {{l.channels}, {l.channels}};
  return {};
}

std::size_t fan_in_of(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv2d: return l.in_channels * l.kernel_h * l.kernel_w;
    case LayerKind::conv1d:
    case LayerKind::transposed_conv1d: return l.in_channels * l.kernel;
    case LayerKind::dense: return l.in_features;
    default: return 1;
  }
}

}  // namespace

Network::Network(std::vector<std::size_t> per_sample_input, std::vector<LayerSpec> layer_specs,
                 std::uint64_t seed)
    : input_shape_(std::move(per_sample_input)), layers_(std::move(layer_specs)) {
  if (input_shape_.empty() || shape_numel(input_shape_) == 0) {
    throw ShapeError("network input shape must be non-empty, got " + shape_str(input_shape_));
  }
  std::vector<std::size_t> cur = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      cur = walk_shape(layers_[i], cur);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  Rng rng(seed);
  params_.resize(layers_.size());
  grads_.resize(layers_.size());
  state_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    for (const auto& shape : expected_param_shapes(l)) params_[i].emplace_back(shape);
    for (const auto& shape : expected_state_shapes(l)) state_[i].emplace_back(shape);
    if (l.kind == LayerKind::batchnorm) {
      std::fill(params_[i][0].data.begin(), params_[i][0].data.end(), 1.0);  // gamma
      std::fill(state_[i][1].data.begin(), state_[i][1].data.end(), 1.0);    // running var
    } else if (!params_[i].empty()) {
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in_of(l)));
      for (double& w : params_[i][0].data) w = rng.normal(0.0, scale);
      // biases stay zero
    }
  }
}

std::vector<std::size_t> Network::output_shape() const {
  std::vector<std::size_t> cur = input_shape_;
  for (const auto& l : layers_) cur = walk_shape(l, cur);
  return cur;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : params_)
    for (const auto& t : layer) n += t.numel();
  return n;
}

Tensor Network::forward(const Tensor& batch, Mode mode) {
  const auto want = input_shape_;
  if (batch.shape.size() != want.size() + 1 ||
      !std::equal(want.begin(), want.end(), batch.shape.begin() + 1) || batch.shape[0] == 0) {
    throw ShapeError("forward input must be {N}+" + shape_str(want) + ", got " +
                     shape_str(batch.shape));
  }
  acts_.assign(1, batch);
  aux_.assign(layers_.size(), {});
  pool_.assign(layers_.size(), {});
  forward_mode_ = mode;

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const Tensor& x = acts_.back();
    const std::size_t n = x.shape[0];
    Tensor y;
    switch (l.kind) {
      case LayerKind::conv2d: {
        const auto d = dims2d(x, "conv2d");
        const std::size_t oh = (d.h - l.kernel_h) / l.stride + 1;
        const std::size_t ow = (d.w - l.kernel_w) / l.stride + 1;
        y = Tensor(batched(n, {l.filters, oh, ow}));
        const auto& wgt = params_[li][0];
        const auto& bias = params_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.filters; ++f)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t q = 0; q < ow; ++q) {
                double acc = bias[f];
                for (std::size_t c = 0; c < d.c; ++c)
                  for (std::size_t i = 0; i < l.kernel_h; ++i)
                    for (std::size_t j = 0; j < l.kernel_w; ++j) {
                      const std::size_t xi =
                          ((b * d.c + c) * d.h + r * l.stride + i) * d.w + q * l.stride + j;
                      const std::size_t wi =
                          ((f * d.c + c) * l.kernel_h + i) * l.kernel_w + j;
                      acc += x[xi] * wgt[wi];
                    }
                y[((b * l.filters + f) * oh + r) * ow + q] = acc;
              }
        break;
      }
      case LayerKind::conv1d: {
        const auto d = dims1d(x, l.in_channels, "conv1d");
        const std::size_t ol = (d.l - l.kernel) / l.stride + 1;
        y = Tensor(batched(n, {l.filters, ol}));
        const auto& wgt = params_[li][0];
        const auto& bias = params_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.filters; ++f)
            for (std::size_t o = 0; o < ol; ++o) {
              double acc = bias[f];
              for (std::size_t c = 0; c < d.c; ++c)
                for (std::size_t k = 0; k < l.kernel; ++k)
                  acc += x[(b * d.c + c) * d.l + o * l.stride + k] *
                         wgt[(f * d.c + c) * l.kernel + k];
              y[(b * l.filters + f) * ol + o] = acc;
            }
        break;
      }
      case LayerKind::transposed_conv1d: {
        const auto d = dims1d(x, l.in_channels, "transposed_conv1d");
        const std::size_t ol = (d.l - 1) * l.stride + l.kernel;
        y = Tensor(batched(n, {l.out_channels, ol}));
        const auto& wgt = params_[li][0];
        const auto& bias = params_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < d.c; ++c)
            for (std::size_t i = 0; i < d.l; ++i) {
              const double xv = x[(b * d.c + c) * d.l + i];
              for (std::size_t f = 0; f < l.out_channels; ++f)
                for (std::size_t k = 0; k < l.kernel; ++k)
                  y[(b * l.out_channels + f) * ol + i * l.stride + k] +=
                      xv * wgt[(c * l.out_channels + f) * l.kernel + k];
            }
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.out_channels; ++f)
            for (std::size_t o = 0; o < ol; ++o) y[(b * l.out_channels + f) * ol + o] += bias[f];
        break;
      }
      case LayerKind::batchnorm: {
        if (x.shape.size() < 2 || x.shape[1] != l.channels) {
          throw ShapeError("batchnorm expects {N," + std::to_string(l.channels) +
                           ",...}, got " + shape_str(x.shape));
        }
        const std::size_t spatial = x.numel() / (n * l.channels);
        const std::size_t count = n * spatial;
        const auto& gamma = params_[li][0];
        const auto& beta = params_[li][1];
        auto& rmean = state_[li][0];
        auto& rvar = state_[li][1];
        Tensor mean({l.channels}), var({l.channels});
        if (mode == Mode::train) {
          if (n < 2) {
            throw StatisticsError("batchnorm cannot form statistics over a batch of " +
                                  std::to_string(n));
          }
          for (std::size_t i = 0; i < x.numel(); ++i) mean[(i / spatial) % l.channels] += x[i];
          for (double& m : mean.data) m /= static_cast<double>(count);
          for (std::size_t i = 0; i < x.numel(); ++i) {
            const double d = x[i] - mean[(i / spatial) % l.channels];
            var[(i / spatial) % l.channels] += d * d;
          }
          for (double& v : var.data) v /= static_cast<double>(count);
          for (std::size_t c = 0; c < l.channels; ++c) {
            rmean[c] = (1.0 - kBnMomentum) * rmean[c] + kBnMomentum * mean[c];
            rvar[c] = (1.0 - kBnMomentum) * rvar[c] + kBnMomentum * var[c];
          }
        } else {
          mean = rmean;
          var = rvar;
        }
        Tensor inv_std({l.channels});
        for (std::size_t c = 0; c < l.channels; ++c)
          inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEpsilon);
        Tensor xhat(x.shape);
        y = Tensor(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          const std::size_t c = (i / spatial) % l.channels;
          xhat[i] = (x[i] - mean[c]) * inv_std[c];
          y[i] = gamma[c] * xhat[i] + beta[c];
        }
        aux_[li].push_back(std::move(xhat));
        aux_[li].push_back(std::move(inv_std));
        break;
      }
      case LayerKind::relu: {
        y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
      }
      case LayerKind::maxpool2x2: {
        const auto d = dims2d(x, "maxpool2x2");
        const std::size_t oh = d.h / 2, ow = d.w / 2;
        y = Tensor(batched(n, {d.c, oh, ow}));
        pool_[li].resize(y.numel());
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < d.c; ++c)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t q = 0; q < ow; ++q) {
                std::size_t best = ((b * d.c + c) * d.h + 2 * r) * d.w + 2 * q;
                double mv = x[best];
                for (std::size_t i = 0; i < 2; ++i)
                  for (std::size_t j = 0; j < 2; ++j) {
                    const std::size_t xi = ((b * d.c + c) * d.h + 2 * r + i) * d.w + 2 * q + j;
                    if (x[xi] > mv) {
                      mv = x[xi];
                      best = xi;
                    }
                  }
                const std::size_t yi = ((b * d.c + c) * oh + r) * ow + q;
                y[yi] = mv;
                pool_[li][yi] = best;
              }
        break;
      }
      case LayerKind::dense: {
        const std::size_t per = x.numel() / n;
        y = Tensor(batched(n, {l.out_features}));
        const auto& wgt = params_[li][0];
        const auto& bias = params_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t o = 0; o < l.out_features; ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < per; ++i) acc += x[b * per + i] * wgt[o * per + i];
            y[b * l.out_features + o] = acc;
          }
        break;
      }
      case LayerKind::softmax: {
        const std::size_t k = x.numel() / n;
        y = x;
        for (std::size_t b = 0; b < n; ++b) {
          double mx = y[b * k];
          for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, y[b * k + i]);
          double sum = 0.0;
          for (std::size_t i = 0; i < k; ++i) {
            y[b * k + i] = std::exp(y[b * k + i] - mx);
            sum += y[b * k + i];
          }
          for (std::size_t i = 0; i < k; ++i) y[b * k + i] /= sum;
        }
        aux_[li].push_back(y);
        break;
      }
    }
    acts_.push_back(std::move(y));
  }
  have_forward_ = true;
  return acts_.back();
}

Tensor Network::backward(const Tensor& output_grad) {
  if (!have_forward_) throw StateError("backward called before forward");
  if (output_grad.shape != acts_.back().shape) {
    throw ShapeError("backward gradient shape " + shape_str(output_grad.shape) +
                     " does not match forward output " + shape_str(acts_.back().shape));
  }
  Tensor g = output_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const Tensor& x = acts_[li];
    const std::size_t n = x.shape[0];
    grads_[li].clear();
    for (const auto& shape : expected_param_shapes(l)) grads_[li].emplace_back(shape);
    Tensor gx(x.shape);
    switch (l.kind) {
      case LayerKind::conv2d: {
        const auto d = dims2d(x, "conv2d");
        const std::size_t oh = (d.h - l.kernel_h) / l.stride + 1;
        const std::size_t ow = (d.w - l.kernel_w) / l.stride + 1;
        const auto& wgt = params_[li][0];
        auto& gw = grads_[li][0];
        auto& gb = grads_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.filters; ++f)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t q = 0; q < ow; ++q) {
                const double gv = g[((b * l.filters + f) * oh + r) * ow + q];
                gb[f] += gv;
                for (std::size_t c = 0; c < d.c; ++c)
                  for (std::size_t i = 0; i < l.kernel_h; ++i)
                    for (std::size_t j = 0; j < l.kernel_w; ++j) {
                      const std::size_t xi =
                          ((b * d.c + c) * d.h + r * l.stride + i) * d.w + q * l.stride + j;
                      const std::size_t wi =
                          ((f * d.c + c) * l.kernel_h + i) * l.kernel_w + j;
                      gw[wi] += gv * x[xi];
                      gx[xi] += gv * wgt[wi];
                    }
              }
        break;
      }
      case LayerKind::conv1d: {
        const auto d = dims1d(x, l.in_channels, "conv1d");
        const std::size_t ol = (d.l - l.kernel) / l.stride + 1;
        const auto& wgt = params_[li][0];
        auto& gw = grads_[li][0];
        auto& gb = grads_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.filters; ++f)
            for (std::size_t o = 0; o < ol; ++o) {
              const double gv = g[(b * l.filters + f) * ol + o];
              gb[f] += gv;
              for (std::size_t c = 0; c < d.c; ++c)
                for (std::size_t k = 0; k < l.kernel; ++k) {
                  const std::size_t xi = (b * d.c + c) * d.l + o * l.stride + k;
                  const std::size_t wi = (f * d.c + c) * l.kernel + k;
                  gw[wi] += gv * x[xi];
                  gx[xi] += gv * wgt[wi];
                }
            }
        break;
      }
      case LayerKind::transposed_conv1d: {
        const auto d = dims1d(x, l.in_channels, "transposed_conv1d");
        const std::size_t ol = (d.l - 1) * l.stride + l.kernel;
        const auto& wgt = params_[li][0];
        auto& gw = grads_[li][0];
        auto& gb = grads_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t f = 0; f < l.out_channels; ++f)
            for (std::size_t o = 0; o < ol; ++o) gb[f] += g[(b * l.out_channels + f) * ol + o];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < d.c; ++c)
            for (std::size_t i = 0; i < d.l; ++i) {
              const std::size_t xi = (b * d.c + c) * d.l + i;
              double acc = 0.0;
              for (std::size_t f = 0; f < l.out_channels; ++f)
                for (std::size_t k = 0; k < l.kernel; ++k) {
                  const std::size_t yi = (b * l.out_channels + f) * ol + i * l.stride + k;
                  const std::size_t wi = (c * l.out_channels + f) * l.kernel + k;
                  acc += g[yi] * wgt[wi];
                  gw[wi] += g[yi] * x[xi];
                }
              gx[xi] = acc;
            }
        break;
      }
      case LayerKind::batchnorm: {
        const std::size_t spatial = x.numel() / (n * l.channels);
        const double count = static_cast<double>(n * spatial);
        const auto& gamma = params_[li][0];
        const Tensor& xhat = aux_[li][0];
        const Tensor& inv_std = aux_[li][1];
        auto& ggamma = grads_[li][0];
        auto& gbeta = grads_[li][1];
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const std::size_t c = (i / spatial) % l.channels;
          ggamma[c] += g[i] * xhat[i];
          gbeta[c] += g[i];
        }
        if (forward_mode_ == Mode::train) {
          // Batch statistics depend on x, so the normalisation couples every
          // element of a channel.
          for (std::size_t i = 0; i < g.numel(); ++i) {
            const std::size_t c = (i / spatial) % l.channels;
            gx[i] = gamma[c] * inv_std[c] *
                    (g[i] - gbeta[c] / count - xhat[i] * ggamma[c] / count);
          }
        } else {
          for (std::size_t i = 0; i < g.numel(); ++i) {
            const std::size_t c = (i / spatial) % l.channels;
            gx[i] = gamma[c] * inv_std[c] * g[i];
          }
        }
        break;
      }
      case LayerKind::relu: {
        for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case LayerKind::maxpool2x2: {
        for (std::size_t yi = 0; yi < g.numel(); ++yi) gx[pool_[li][yi]] += g[yi];
        break;
      }
      case LayerKind::dense: {
        const std::size_t per = x.numel() / n;
        const auto& wgt = params_[li][0];
        auto& gw = grads_[li][0];
        auto& gb = grads_[li][1];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t o = 0; o < l.out_features; ++o) {
            const double gv = g[b * l.out_features + o];
            gb[o] += gv;
            for (std::size_t i = 0; i < per; ++i) {
              gw[o * per + i] += gv * x[b * per + i];
              gx[b * per + i] += gv * wgt[o * per + i];
            }
          }
        break;
      }
      case LayerKind::softmax: {
        const Tensor& y = aux_[li][0];
        const std::size_t k = x.numel() / n;
        for (std::size_t b = 0; b < n; ++b) {
          double dot = 0.0;
          for (std::size_t i = 0; i < k; ++i) dot += g[b * k + i] * y[b * k + i];
          for (std::size_t i = 0; i < k; ++i)
            gx[b * k + i] = y[b * k + i] * (g[b * k + i] - dot);
        }
        break;
      }
    }
    g = std::move(gx);
  }
  return g;
}

LossResult cross_entropy(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape || pred.shape.size() != 2) {
    throw ShapeError("cross_entropy expects matching {N,K} tensors, got " +
                     shape_str(pred.shape) + " and " + shape_str(target.shape));
  }
  const std::size_t n = pred.shape[0], k = pred.shape[1];
  for (std::size_t b = 0; b < n; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double p = pred[b * k + i];
      if (p < -1e-9 || !std::isfinite(p)) {
        throw InvalidArgument("cross_entropy prediction row " + std::to_string(b) +
                              " is not a probability vector");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InvalidArgument("cross_entropy prediction row " + std::to_string(b) +
                            " sums to " + std::to_string(sum));
    }
  }
  LossResult r;
  r.grad = Tensor(pred.shape);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double p = std::max(pred[i], kLogClamp);
    r.value -= target[i] * std::log(p);
    r.grad[i] = -target[i] / p;
  }
  return r;
}

LossResult mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("mse expects matching shapes, got " + shape_str(pred.shape) + " and " +
                     shape_str(target.shape));
  }
  LossResult r;
  r.grad = Tensor(pred.shape);
  const double inv = 1.0 / static_cast<double>(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    r.value += d * d * inv;
    r.grad[i] = 2.0 * d * inv;
  }
  return r;
}

KlResult kl_gaussian(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape != logvar.shape) {
    throw ShapeError("kl_gaussian expects matching shapes, got " + shape_str(mu.shape) +
                     " and " + shape_str(logvar.shape));
  }
  KlResult r;
  r.grad_mu = Tensor(mu.shape);
  r.grad_logvar = Tensor(mu.shape);
  for (std::size_t i = 0; i < mu.numel(); ++i) {
    const double var = std::exp(logvar[i]);
    r.value += 0.5 * (mu[i] * mu[i] + var - logvar[i] - 1.0);
    r.grad_mu[i] = mu[i];
    r.grad_logvar[i] = 0.5 * (var - 1.0);
  }
  return r;
}

void Sgd::step(Network& net) const {
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    auto& p = net.params(li);
    const auto& g = net.grads(li);
    if (p.empty()) continue;
    if (g.size() != p.size()) throw StateError("optimizer step before backward");
    for (std::size_t s = 0; s < p.size(); ++s)
      for (std::size_t i = 0; i < p[s].numel(); ++i) p[s][i] -= learning_rate * g[s][i];
  }
}

void Adam::step(Network& net) {
  const std::size_t nl = net.layers().size();
  if (m_.empty()) {
    m_.resize(nl);
    v_.resize(nl);
    for (std::size_t li = 0; li < nl; ++li)
      for (const auto& t : net.params(li)) {
        m_[li].emplace_back(t.shape);
        v_[li].emplace_back(t.shape);
      }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t li = 0; li < nl; ++li) {
    auto& p = net.params(li);
    const auto& g = net.grads(li);
    if (p.empty()) continue;
    if (g.size() != p.size()) throw StateError("optimizer step before backward");
    for (std::size_t s = 0; s < p.size(); ++s)
      for (std::size_t i = 0; i < p[s].numel(); ++i) {
        auto& m = m_[li][s][i];
        auto& v = v_[li][s][i];
        m = b1_ * m + (1.0 - b1_) * g[s][i];
        v = b2_ * v + (1.0 - b2_) * g[s][i] * g[s][i];
        p[s][i] -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
      }
  }
}

std::vector<double> train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  const std::size_t n = data.size();
  if (n == 0) throw InvalidArgument("training dataset is empty");
  if (data.targets.shape.empty() || data.targets.shape[0] != n) {
    throw InvalidArgument("targets hold " +
                          std::to_string(data.targets.shape.empty() ? 0 : data.targets.shape[0]) +
                          " samples but inputs hold " + std::to_string(n));
  }
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t batches = n / bs;
  const std::size_t in_per = data.inputs.numel() / n;
  const std::size_t tg_per = data.targets.numel() / n;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Sgd sgd{cfg.learning_rate};
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  std::vector<double> history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      Tensor in(batched(bs, net.input_shape()));
      std::vector<std::size_t> tshape = data.targets.shape;
      tshape[0] = bs;
      Tensor tg(tshape);
      for (std::size_t s = 0; s < bs; ++s) {
        const std::size_t src = order[b * bs + s];
        std::copy_n(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(src * in_per),
                    in_per, in.data.begin() + static_cast<std::ptrdiff_t>(s * in_per));
        std::copy_n(data.targets.data.begin() + static_cast<std::ptrdiff_t>(src * tg_per),
                    tg_per, tg.data.begin() + static_cast<std::ptrdiff_t>(s * tg_per));
      }
      const Tensor out = net.forward(in, Mode::train);
      const LossResult loss =
          cfg.loss == LossKind::cross_entropy ? cross_entropy(out, tg) : mse(out, tg);
      net.backward(loss.grad);
      if (cfg.optimizer == Optimizer::sgd) {
        sgd.step(net);
      } else {
        adam.step(net);
      }
      epoch_loss += loss.value;
      seen += bs;
    }
    history.push_back(seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0);
  }
  return history;
}

namespace {

double loss_value(Network& net, const Tensor& input, const Tensor& target, LossKind loss,
                  Mode mode) {
  const Tensor out = net.forward(input, mode);
  return loss == LossKind::cross_entropy ? cross_entropy(out, target).value
                                         : mse(out, target).value;
}

}  // namespace

std::vector<std::vector<Tensor>> fd_param_gradients(Network& net, const Tensor& input,
                                                    const Tensor& target, LossKind loss,
                                                    Mode mode, double h) {
  // Running statistics drift across train-mode forwards; freeze them so every
  // probe sees the same network.
  std::vector<std::vector<Tensor>> state_snapshot;
  for (std::size_t li = 0; li < net.layers().size(); ++li) state_snapshot.push_back(net.state(li));
  const auto restore_state = [&] {
    for (std::size_t li = 0; li < net.layers().size(); ++li) net.state(li) = state_snapshot[li];
  };

  std::vector<std::vector<Tensor>> fd(net.layers().size());
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    for (auto& t : net.params(li)) {
      Tensor g(t.shape);
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const double up = loss_value(net, input, target, loss, mode);
        restore_state();
        t[i] = keep - h;
        const double dn = loss_value(net, input, target, loss, mode);
        restore_state();
        t[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
      }
      fd[li].push_back(std::move(g));
    }
  }
  return fd;
}

double max_grad_rel_error(Network& net, const Tensor& input, const Tensor& target,
                          LossKind loss, Mode mode, double h) {
  const Tensor out = net.forward(input, mode);
  const LossResult lr = loss == LossKind::cross_entropy ? cross_entropy(out, target)
                                                        : mse(out, target);
  net.backward(lr.grad);
  std::vector<std::vector<Tensor>> analytic;
  for (std::size_t li = 0; li < net.layers().size(); ++li) analytic.push_back(net.grads(li));

  const auto fd = fd_param_gradients(net, input, target, loss, mode, h);
  double worst = 0.0;
  for (std::size_t li = 0; li < fd.size(); ++li)
    for (std::size_t s = 0; s < fd[li].size(); ++s)
      for (std::size_t i = 0; i < fd[li][s].numel(); ++i) {
        const double a = analytic[li][s][i];
        const double f = fd[li][s][i];
        const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-6});
        worst = std::max(worst, rel);
      }
  return worst;
}

namespace {

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"data", base64_encode(t.data)}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t;
  if (!j.contains("shape") || !j.contains("data")) throw FormatError("tensor entry incomplete");
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.data = base64_decode(j.at("data").get<std::string>());
  if (t.data.size() != shape_numel(t.shape)) {
    throw FormatError("tensor blob holds " + std::to_string(t.data.size()) +
                      " values for shape " + shape_str(t.shape));
  }
  return t;
}

json layer_to_json(const LayerSpec& l) {
  json j{{"kind", layer_kind_name(l.kind)}};
  switch (l.kind) {
    case LayerKind::conv2d:
      j["filters"] = l.filters;
      j["in_channels"] = l.in_channels;
      j["kernel_h"] = l.kernel_h;
      j["kernel_w"] = l.kernel_w;
      j["stride"] = l.stride;
      break;
    case LayerKind::conv1d:
      j["filters"] = l.filters;
      j["in_channels"] = l.in_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::transposed_conv1d:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::batchnorm:
      j["channels"] = l.channels;
      break;
    case LayerKind::dense:
      j["in_features"] = l.in_features;
      j["out_features"] = l.out_features;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  LayerSpec l;
  if (kind == "conv2d") {
    l = conv2d(j.at("filters"), j.at("in_channels"), j.at("kernel_h"), j.at("kernel_w"),
               j.at("stride"));
  } else if (kind == "conv1d") {
    l = conv1d(j.at("filters"), j.at("in_channels"), j.at("kernel"), j.at("stride"));
  } else if (kind == "transposed_conv1d") {
    l = transposed_conv1d(j.at("in_channels"), j.at("out_channels"), j.at("kernel"),
                          j.at("stride"));
  } else if (kind == "batchnorm") {
    l = batchnorm(j.at("channels"));
  } else if (kind == "relu") {
    l = relu();
  } else if (kind == "maxpool2x2") {
    l = maxpool2x2();
  } else if (kind == "dense") {
    l = dense(j.at("in_features"), j.at("out_features"));
  } else if (kind == "softmax") {
    l = softmax();
  } else {
    throw FormatError("unknown layer kind '" + kind + "'");
  }
  return l;
}

}  // namespace

void save_network(const Network& net, std::ostream& out) {
  json doc;
  doc["format"] = "gridmon-model";
  doc["version"] = 1;
  doc["input_shape"] = net.input_shape();
  doc["layers"] = json::array();
  doc["params"] = json::array();
  doc["state"] = json::array();
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    doc["layers"].push_back(layer_to_json(net.layers()[li]));
    json p = json::array(), s = json::array();
    for (const auto& t : net.params(li)) p.push_back(tensor_to_json(t));
    for (const auto& t : net.state(li)) s.push_back(tensor_to_json(t));
    doc["params"].push_back(std::move(p));
    doc["state"].push_back(std::move(s));
  }
  doc["meta_values"] = net.meta_values;
  doc["meta_text"] = net.meta_text;
  out << doc.dump(1) << "\n";
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save_network(net, out);
}

Network load_network(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file is not valid structured text: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "gridmon-model") {
      throw FormatError("not a gridmon model file");
    }
    const auto version = doc.at("version").get<std::int64_t>();
    if (version != 1) {
      throw FormatError("unsupported model version " + std::to_string(version));
    }
    Network net;
    net.input_shape_ = doc.at("input_shape").get<std::vector<std::size_t>>();
    for (const auto& lj : doc.at("layers")) net.layers_.push_back(layer_from_json(lj));

    // Re-walk the chain so corrupted specs fail here, not at first use.
    std::vector<std::size_t> cur = net.input_shape_;
    for (std::size_t i = 0; i < net.layers_.size(); ++i) {
      try {
        cur = walk_shape(net.layers_[i], cur);
      } catch (const ShapeError& e) {
        throw FormatError("layer " + std::to_string(i) + ": " + e.what());
      }
    }

    const auto& pj = doc.at("params");
    const auto& sj = doc.at("state");
    if (pj.size() != net.layers_.size() || sj.size() != net.layers_.size()) {
      throw FormatError("parameter table does not match the layer list");
    }
    net.params_.resize(net.layers_.size());
    net.grads_.resize(net.layers_.size());
    net.state_.resize(net.layers_.size());
    for (std::size_t li = 0; li < net.layers_.size(); ++li) {
      for (const auto& tj : pj[li]) net.params_[li].push_back(tensor_from_json(tj));
      for (const auto& tj : sj[li]) net.state_[li].push_back(tensor_from_json(tj));
      const auto want_p = expected_param_shapes(net.layers_[li]);
      const auto want_s = expected_state_shapes(net.layers_[li]);
      const auto check = [li](const std::vector<Tensor>& got,
                              const std::vector<std::vector<std::size_t>>& want,
                              const char* what) {
        if (got.size() != want.size())
          throw FormatError("layer " + std::to_string(li) + ": wrong " + what + " count");
        for (std::size_t s = 0; s < got.size(); ++s)
          if (got[s].shape != want[s])
            throw FormatError("layer " + std::to_string(li) + ": " + what + " " +
                              std::to_string(s) + " has shape " + shape_str(got[s].shape) +
                              ", expected " + shape_str(want[s]));
      };
      check(net.params_[li], want_p, "parameter");
      check(net.state_[li], want_s, "state");
    }
    if (doc.contains("meta_values")) {
      net.meta_values =
          doc.at("meta_values").get<std::map<std::string, std::vector<double>>>();
    }
    if (doc.contains("meta_text")) {
      net.meta_text = doc.at("meta_text").get<std::map<std::string, std::string>>();
    }
    return net;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model document is missing required fields: ") + e.what());
  }
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return load_network(in);
}

}  // namespace gridmon::nn

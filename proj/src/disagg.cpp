#include "gridmon/disagg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gridmon/errors.hpp"
#include "gridmon/rng.hpp"
#include "json.hpp"

namespace gridmon::disagg {

namespace {

// Avoids division blowup on windows where nothing is running.
constexpr double kScaleFloorW = 1.0;

// Keeps exp(logvar) finite whatever the encoder emits.
constexpr double kLogvarLo = -10.0;
constexpr double kLogvarHi = 10.0;

}  // namespace

void append_window(WindowSet& set, std::span<const double> aggregate_w,
                   std::span<const double> target_w) {
  if (aggregate_w.empty()) throw InvalidArgument("cannot append an empty window");
  if (!target_w.empty() && target_w.size() != aggregate_w.size()) {
    throw ShapeError("target window has " + std::to_string(target_w.size()) +
                     " samples, aggregate has " + std::to_string(aggregate_w.size()));
  }
  const std::size_t t = aggregate_w.size();
  if (set.size() == 0) {
    set.inputs = nn::Tensor({0, t});
    set.targets = nn::Tensor({0, t});
  } else if (set.window() != t) {
    throw ShapeError("window set holds " + std::to_string(set.window()) +
                     "-sample windows, got " + std::to_string(t));
  }

  double mean = 0.0;
  for (double v : aggregate_w) mean += v;
  mean /= static_cast<double>(t);
  double var = 0.0;
  for (double v : aggregate_w) var += (v - mean) * (v - mean);
  const double scale = std::max(std::sqrt(var / static_cast<double>(t)), kScaleFloorW);

  set.inputs.shape[0] += 1;
  set.targets.shape[0] += 1;
  for (double v : aggregate_w) set.inputs.data.push_back((v - mean) / scale);
  // The target keeps a true zero: only the window's scale is shared, so an
  // idle appliance stays exactly representable whatever the aggregate level.
  if (target_w.empty()) {
    set.targets.data.insert(set.targets.data.end(), t, 0.0);
  } else {
    for (double v : target_w) set.targets.data.push_back(v / scale);
  }
  set.offset.push_back(mean);
  set.scale.push_back(scale);
}

WindowSet build_disagg_corpus(const DisaggCorpusOptions& opt, std::uint64_t seed) {
  if (opt.windows == 0) throw InvalidArgument("corpus needs at least one window");
  if (opt.window < 12) throw InvalidArgument("windows shorter than 12 samples cannot be encoded");
  if (opt.max_background < 1) throw InvalidArgument("need at least one background appliance");
  if (opt.with_target_fraction < 0.0 || opt.with_target_fraction > 1.0) {
    throw InvalidArgument("with-target fraction must sit in [0, 1]");
  }
  const std::size_t t = opt.window;
  // Windows are cut from longer scenes so background devices run at natural
  // rates with their surrounding phases intact, the way a deployed meter
  // sees them, instead of every device being forced into every window.
  const std::size_t scene = 10 * t;
  const auto n_pos =
      static_cast<std::size_t>(std::llround(opt.with_target_fraction * static_cast<double>(opt.windows)));

  WindowSet set;
  set.appliance = sim::appliance_name(opt.appliance);
  for (std::size_t i = 0; i < opt.windows; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto background = static_cast<int>(rng.uniform_int(1, opt.max_background));
    const bool with_target = i < n_pos;
    const auto parts =
        sim::gen_aggregate(opt.appliance, scene, background, rng.next_u64(), with_target);

    std::size_t start = 0;
    if (with_target) {
      // Any start that overlaps the activation by at least one sample; edges
      // included so the model also sees partially visible runs.
      std::size_t first = scene;
      std::size_t last = 0;
      for (std::size_t j = 0; j < scene; ++j) {
        if (parts.target_w[j] > 0.0) {
          first = std::min(first, j);
          last = j;
        }
      }
      const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(first) -
                                                    static_cast<std::int64_t>(t) + 1);
      const auto hi = std::min<std::int64_t>(static_cast<std::int64_t>(scene - t),
                                             static_cast<std::int64_t>(last));
      start = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    } else {
      // Prefer the busiest stretch among a few draws: quiet windows teach the
      // model nothing about holding zero output through background bursts.
      double busiest = -1.0;
      for (int cand = 0; cand < 4; ++cand) {
        const auto s = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(scene - t)));
        double peak = 0.0;
        for (std::size_t j = 0; j < t; ++j) peak = std::max(peak, parts.aggregate_w[s + j]);
        if (peak > busiest) {
          busiest = peak;
          start = s;
        }
      }
    }
    const std::span<const double> agg(parts.aggregate_w.data() + start, t);
    const std::span<const double> tgt(parts.target_w.data() + start, t);
    const bool any = std::any_of(tgt.begin(), tgt.end(), [](double v) { return v > 0.0; });
    append_window(set, agg, any ? tgt : std::span<const double>{});
  }
  return set;
}

Cvae::Cvae(const CvaeSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.window < 12) throw InvalidArgument("window must be at least 12 samples");
  if (spec.latent < 1) throw InvalidArgument("latent size must be positive");
  if (spec.kl_weight < 0.0) throw InvalidArgument("kl weight must be non-negative");
  const std::size_t hid = spec.window - 8;
  encoder_ = nn::Network({spec.window},
                         {nn::conv1d(10, 1, 6), nn::relu(), nn::conv1d(20, 10, 4), nn::relu(),
                          nn::dense(20 * hid, 2 * spec.latent)},
                         derive_seed(seed, 1));
  decoder_ = nn::Network({spec.latent},
                         {nn::dense(spec.latent, 20 * hid), nn::relu(),
                          nn::transposed_conv1d(20, 10, 4), nn::relu(),
                          nn::transposed_conv1d(10, 1, 6)},
                         derive_seed(seed, 2));
}

Cvae::LossParts Cvae::compute(const nn::Tensor& inputs, const nn::Tensor& targets,
                              const nn::Tensor& eps, bool with_grads) {
  const std::size_t t = spec_.window;
  const std::size_t d = spec_.latent;
  if (inputs.shape.size() != 2 || inputs.shape[1] != t || inputs.shape[0] == 0) {
    throw ShapeError("expected aggregate windows {B, " + std::to_string(t) + "}, got " +
                     nn::shape_str(inputs.shape));
  }
  const std::size_t b = inputs.shape[0];
  if (targets.shape != inputs.shape) {
    throw ShapeError("target shape " + nn::shape_str(targets.shape) +
                     " does not match input shape " + nn::shape_str(inputs.shape));
  }
  if (eps.shape != std::vector<std::size_t>{b, d}) {
    throw ShapeError("noise shape " + nn::shape_str(eps.shape) + " must be {" +
                     std::to_string(b) + ", " + std::to_string(d) + "}");
  }

  const auto enc_out = encoder_.forward(inputs, nn::Mode::train);
  nn::Tensor mu({b, d});
  nn::Tensor logvar({b, d});
  std::vector<char> saturated(b * d, 0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      mu[i * d + j] = enc_out[i * 2 * d + j];
      const double raw = enc_out[i * 2 * d + d + j];
      logvar[i * d + j] = std::clamp(raw, kLogvarLo, kLogvarHi);
      saturated[i * d + j] = raw < kLogvarLo || raw > kLogvarHi;
    }
  }

  nn::Tensor z({b, d});
  for (std::size_t i = 0; i < b * d; ++i) {
    z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
  }

  const auto dec_out = decoder_.forward(z, nn::Mode::train);
  nn::Tensor flat = dec_out;
  flat.shape = {b, t};
  // Estimation term is the per-window mean square error; the divergence term
  // is the per-window closed-form KL against a unit Gaussian.
  const auto recon = nn::mse(flat, targets);
  const auto kl = nn::kl_gaussian(mu, logvar);
  const double kl_per_window = kl.value / static_cast<double>(b);

  LossParts parts;
  parts.recon = recon.value;
  parts.kl = kl_per_window;
  parts.total = recon.value + spec_.kl_weight * kl_per_window;

  if (with_grads) {
    nn::Tensor gdec = recon.grad;
    gdec.shape = dec_out.shape;
    const auto dz = decoder_.backward(gdec);
    const double w = spec_.kl_weight / static_cast<double>(b);
    nn::Tensor genc({b, 2 * d});
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t f = i * d + j;
        genc[i * 2 * d + j] = dz[f] + w * kl.grad_mu[f];
        // z depends on logvar through sigma; the clamp kills the gradient
        // once the raw value leaves the representable range.
        const double glv =
            dz[f] * eps[f] * std::exp(0.5 * logvar[f]) * 0.5 + w * kl.grad_logvar[f];
        genc[i * 2 * d + d + j] = saturated[f] ? 0.0 : glv;
      }
    }
    encoder_.backward(genc);
  }
  return parts;
}

Cvae::LossParts Cvae::loss_for(const nn::Tensor& inputs, const nn::Tensor& targets,
                               const nn::Tensor& eps) {
  return compute(inputs, targets, eps, false);
}

Cvae::LossParts Cvae::backprop(const nn::Tensor& inputs, const nn::Tensor& targets,
                               const nn::Tensor& eps) {
  return compute(inputs, targets, eps, true);
}

nn::Tensor Cvae::reconstruct(const nn::Tensor& inputs) {
  const std::size_t t = spec_.window;
  const std::size_t d = spec_.latent;
  if (inputs.shape.size() != 2 || inputs.shape[1] != t || inputs.shape[0] == 0) {
    throw ShapeError("expected aggregate windows {B, " + std::to_string(t) + "}, got " +
                     nn::shape_str(inputs.shape));
  }
  const std::size_t b = inputs.shape[0];
  const auto enc_out = encoder_.forward(inputs, nn::Mode::infer);
  nn::Tensor z({b, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) z[i * d + j] = enc_out[i * 2 * d + j];
  auto out = decoder_.forward(z, nn::Mode::infer);
  out.shape = {b, t};
  return out;
}

LatentParams encode(Cvae& model, std::span<const double> x_norm) {
  const std::size_t t = model.spec().window;
  const std::size_t d = model.spec().latent;
  if (x_norm.size() != t) {
    throw ShapeError("model expects " + std::to_string(t) + "-sample windows, got " +
                     std::to_string(x_norm.size()));
  }
  nn::Tensor x({1, t});
  std::copy(x_norm.begin(), x_norm.end(), x.data.begin());
  const auto out = model.encoder().forward(x, nn::Mode::infer);
  LatentParams p;
  p.mu.assign(out.data.begin(), out.data.begin() + static_cast<std::ptrdiff_t>(d));
  p.logvar.resize(d);
  for (std::size_t j = 0; j < d; ++j) p.logvar[j] = std::clamp(out[d + j], kLogvarLo, kLogvarHi);
  return p;
}

std::vector<double> reparameterize(LatentParams& params, std::uint64_t seed) {
  if (params.mu.empty() || params.mu.size() != params.logvar.size()) {
    throw ShapeError("latent parameters need matching non-empty mu and logvar");
  }
  Rng rng(seed);
  const std::size_t d = params.mu.size();
  params.eps.resize(d);
  params.z.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    params.eps[j] = rng.normal();
    params.z[j] = params.mu[j] + std::exp(0.5 * params.logvar[j]) * params.eps[j];
  }
  return params.z;
}

std::vector<double> decode(Cvae& model, std::span<const double> z) {
  const std::size_t d = model.spec().latent;
  if (z.size() != d) {
    throw ShapeError("model expects a " + std::to_string(d) + "-dimensional code, got " +
                     std::to_string(z.size()));
  }
  nn::Tensor code({1, d});
  std::copy(z.begin(), z.end(), code.data.begin());
  const auto out = model.decoder().forward(code, nn::Mode::infer);
  return out.data;
}

Cvae::LossParts cvae_loss(Cvae& model, std::span<const double> x_norm,
                          std::span<const double> y_norm, double kl_weight,
                          std::uint64_t seed) {
  const std::size_t t = model.spec().window;
  if (y_norm.size() != t) {
    throw ShapeError("target window has " + std::to_string(y_norm.size()) +
                     " samples, model expects " + std::to_string(t));
  }
  if (kl_weight < 0.0) throw InvalidArgument("kl weight must be non-negative");
  auto params = encode(model, x_norm);
  const auto z = reparameterize(params, seed);
  const auto est = decode(model, z);

  Cvae::LossParts parts;
  for (std::size_t i = 0; i < t; ++i) {
    const double diff = est[i] - y_norm[i];
    parts.recon += diff * diff;
  }
  parts.recon /= static_cast<double>(t);
  for (std::size_t j = 0; j < params.mu.size(); ++j) {
    parts.kl += 0.5 * (params.mu[j] * params.mu[j] + std::exp(params.logvar[j]) -
                       params.logvar[j] - 1.0);
  }
  parts.total = parts.recon + kl_weight * parts.kl;
  return parts;
}

std::vector<double> train_cvae(Cvae& model, const WindowSet& data,
                               const DisaggTrainConfig& cfg) {
  if (data.size() == 0) throw InvalidArgument("window set is empty");
  if (data.window() != model.spec().window) {
    throw ShapeError("window set holds " + std::to_string(data.window()) +
                     "-sample windows, model expects " +
                     std::to_string(model.spec().window));
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0) {
    throw InvalidArgument("epochs and batch size must be positive");
  }
  if (!data.appliance.empty()) {
    if (model.appliance.empty()) {
      model.appliance = data.appliance;
    } else if (model.appliance != data.appliance) {
      throw InvalidArgument("model estimates '" + model.appliance +
                            "', window set holds '" + data.appliance + "'");
    }
  }
  const std::size_t n = data.size();
  const std::size_t t = data.window();
  const std::size_t d = model.spec().latent;
  std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t batches = n / bs;

  Rng rng(cfg.seed);
  nn::Adam opt_enc(cfg.learning_rate);
  nn::Adam opt_dec(cfg.learning_rate);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t k = 0; k < batches; ++k) {
      nn::Tensor bi({bs, t});
      nn::Tensor bt({bs, t});
      for (std::size_t r = 0; r < bs; ++r) {
        const std::size_t src = order[k * bs + r];
        std::copy_n(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(src * t), t,
                    bi.data.begin() + static_cast<std::ptrdiff_t>(r * t));
        std::copy_n(data.targets.data.begin() + static_cast<std::ptrdiff_t>(src * t), t,
                    bt.data.begin() + static_cast<std::ptrdiff_t>(r * t));
      }
      nn::Tensor eps({bs, d});
      for (auto& v : eps.data) v = rng.normal();
      sum += model.backprop(bi, bt, eps).total;
      opt_enc.step(model.encoder());
      opt_dec.step(model.decoder());
    }
    history.push_back(sum / static_cast<double>(batches));
  }
  model.trained = true;
  return history;
}

std::vector<double> disaggregate_window(Cvae& model, std::span<const double> aggregate_w) {
  const std::size_t t = model.spec().window;
  if (aggregate_w.size() != t) {
    throw ShapeError("model expects " + std::to_string(t) + "-sample windows, got " +
                     std::to_string(aggregate_w.size()));
  }
  WindowSet one;
  append_window(one, aggregate_w, {});
  const auto norm = model.reconstruct(one.inputs);
  std::vector<double> watts(t);
  for (std::size_t i = 0; i < t; ++i) watts[i] = std::max(0.0, norm[i] * one.scale[0]);
  return watts;
}

double mae(std::span<const double> truth_w, std::span<const double> estimate_w) {
  if (truth_w.empty() || truth_w.size() != estimate_w.size()) {
    throw ShapeError("sequences must be aligned and non-empty, got " +
                     std::to_string(truth_w.size()) + " and " +
                     std::to_string(estimate_w.size()) + " samples");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < truth_w.size(); ++i) sum += std::abs(estimate_w[i] - truth_w[i]);
  return sum / static_cast<double>(truth_w.size());
}

double sae(std::span<const double> truth_w, std::span<const double> estimate_w) {
  if (truth_w.empty() || truth_w.size() != estimate_w.size()) {
    throw ShapeError("sequences must be aligned and non-empty, got " +
                     std::to_string(truth_w.size()) + " and " +
                     std::to_string(estimate_w.size()) + " samples");
  }
  const double energy_true = std::accumulate(truth_w.begin(), truth_w.end(), 0.0);
  if (energy_true <= 0.0) {
    throw InvalidArgument("true sequence carries no energy, relative error undefined");
  }
  const double energy_est = std::accumulate(estimate_w.begin(), estimate_w.end(), 0.0);
  return std::abs(energy_est - energy_true) / energy_true;
}

DisaggScore score_disagg(Cvae& model, const WindowSet& data) {
  if (data.size() == 0) throw InvalidArgument("window set is empty");
  if (data.window() != model.spec().window) {
    throw ShapeError("window set holds " + std::to_string(data.window()) +
                     "-sample windows, model expects " +
                     std::to_string(model.spec().window));
  }
  const std::size_t n = data.size();
  const std::size_t t = data.window();
  const auto norm = model.reconstruct(data.inputs);

  double abs_sum = 0.0;
  double energy_true = 0.0;
  double energy_est = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = data.scale[i];
    for (std::size_t j = 0; j < t; ++j) {
      const double est = std::max(0.0, norm[i * t + j] * s);
      const double truth = data.targets[i * t + j] * s;
      abs_sum += std::abs(est - truth);
      energy_est += est;
      energy_true += truth;
    }
  }
  if (energy_true <= 0.0) {
    throw InvalidArgument("window set carries no appliance energy to score against");
  }
  DisaggScore score;
  score.mae_w = abs_sum / static_cast<double>(n * t);
  score.sae = std::abs(energy_est - energy_true) / energy_true;
  return score;
}

void save_cvae(const Cvae& model, std::ostream& out) {
  nlohmann::ordered_json j;
  j["format"] = "gridmon-cvae";
  j["version"] = 1;
  j["window"] = model.spec().window;
  j["latent"] = model.spec().latent;
  j["kl_weight"] = model.spec().kl_weight;
  j["appliance"] = model.appliance;
  j["trained"] = model.trained;
  std::ostringstream enc;
  std::ostringstream dec;
  nn::save_network(model.encoder(), enc);
  nn::save_network(model.decoder(), dec);
  j["encoder"] = nlohmann::ordered_json::parse(enc.str());
  j["decoder"] = nlohmann::ordered_json::parse(dec.str());
  out << j.dump(1) << '\n';
}

void save_cvae(const Cvae& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save_cvae(model, out);
}

Cvae load_cvae(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.contains("format") || j["format"].get<std::string>() != "gridmon-cvae") {
      throw FormatError("not a disaggregation model file");
    }
    if (j.at("version").get<int>() != 1) {
      throw FormatError("unsupported disaggregation model version");
    }
    Cvae model;
    model.spec_.window = j.at("window").get<std::size_t>();
    model.spec_.latent = j.at("latent").get<std::size_t>();
    model.spec_.kl_weight = j.at("kl_weight").get<double>();
    if (model.spec_.window < 12 || model.spec_.latent < 1 || model.spec_.kl_weight < 0.0) {
      throw FormatError("model file declares an unusable geometry");
    }
    std::istringstream enc(j.at("encoder").dump());
    std::istringstream dec(j.at("decoder").dump());
    model.encoder_ = nn::load_network(enc);
    model.decoder_ = nn::load_network(dec);
    model.appliance = j.value("appliance", "");
    model.trained = j.value("trained", false);

    const std::vector<std::size_t> want_in{model.spec_.window};
    const std::vector<std::size_t> want_code{model.spec_.latent};
    const std::vector<std::size_t> want_out{1, model.spec_.window};
    if (model.encoder_.input_shape() != want_in ||
        model.encoder_.output_shape() != std::vector<std::size_t>{2 * model.spec_.latent} ||
        model.decoder_.input_shape() != want_code ||
        model.decoder_.output_shape() != want_out) {
      throw FormatError("stored networks do not match the declared window/latent sizes");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed disaggregation model: ") + e.what());
  }
}

Cvae load_cvae(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return load_cvae(in);
}

}  // namespace gridmon::disagg

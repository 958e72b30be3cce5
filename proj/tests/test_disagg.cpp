#include "gridmon/disagg.hpp"

#include <cmath>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "gridmon/errors.hpp"
#include "gridmon/rng.hpp"

using namespace gridmon;

TEST_CASE("window normalisation standardises input and scales target") {
  disagg::WindowSet set;
  const double agg[] = {0.0, 0.0, 10.0, 10.0};
  const double tgt[] = {0.0, 0.0, 2.5, 5.0};
  disagg::append_window(set, agg, tgt);

  REQUIRE(set.size() == 1);
  REQUIRE(set.window() == 4);
  CHECK(set.offset[0] == doctest::Approx(5.0));
  CHECK(set.scale[0] == doctest::Approx(5.0));
  CHECK(set.inputs[0] == doctest::Approx(-1.0));
  CHECK(set.inputs[2] == doctest::Approx(1.0));
  CHECK(set.targets[2] == doctest::Approx(0.5));
  CHECK(set.targets[3] == doctest::Approx(1.0));

  // A flat window hits the scale floor instead of dividing by zero, and an
  // absent target stays exactly zero.
  const double flat[] = {3.0, 3.0, 3.0, 3.0};
  disagg::append_window(set, flat, {});
  CHECK(set.scale[1] == doctest::Approx(1.0));
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(set.inputs[4 + j] == doctest::Approx(0.0));
    CHECK(set.targets[4 + j] == 0.0);
  }

  const double shorter[] = {1.0, 2.0};
  CHECK_THROWS_AS(disagg::append_window(set, shorter, {}), ShapeError);
  const double tgt3[] = {1.0, 2.0, 3.0};
  const double agg4[] = {1.0, 2.0, 3.0, 4.0};
  CHECK_THROWS_AS(disagg::append_window(set, agg4, tgt3), ShapeError);
  CHECK_THROWS_AS(disagg::append_window(set, {}, {}), InvalidArgument);
}

TEST_CASE("corpus construction is seeded and shape-consistent") {
  disagg::DisaggCorpusOptions opt;
  opt.windows = 40;
  opt.window = 24;
  const auto a = disagg::build_disagg_corpus(opt, 31);
  const auto b = disagg::build_disagg_corpus(opt, 31);
  const auto c = disagg::build_disagg_corpus(opt, 32);

  REQUIRE(a.size() == 40);
  REQUIRE(a.window() == 24);
  CHECK(a.inputs.data == b.inputs.data);
  CHECK(a.targets.data == b.targets.data);
  CHECK(a.scale == b.scale);
  CHECK(a.inputs.data != c.inputs.data);
  for (double s : a.scale) CHECK(s >= 1.0);

  // Roughly half the windows should carry appliance energy.
  std::size_t with = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 24; ++j) sum += a.targets[i * 24 + j];
    with += sum > 0.0;
  }
  CHECK(with >= 10);
  CHECK(with <= 30);

  opt.windows = 0;
  CHECK_THROWS_AS(std::ignore = disagg::build_disagg_corpus(opt, 1), InvalidArgument);
  opt.windows = 10;
  opt.window = 8;
  CHECK_THROWS_AS(std::ignore = disagg::build_disagg_corpus(opt, 1), InvalidArgument);
  opt.window = 24;
  opt.max_background = 0;
  CHECK_THROWS_AS(std::ignore = disagg::build_disagg_corpus(opt, 1), InvalidArgument);
}

TEST_CASE("autoencoder geometry follows the window and latent sizes") {
  disagg::Cvae model({64, 16, 0.1}, 5);
  CHECK(model.encoder().input_shape() == std::vector<std::size_t>{64});
  CHECK(model.encoder().output_shape() == std::vector<std::size_t>{32});
  CHECK(model.decoder().input_shape() == std::vector<std::size_t>{16});
  CHECK(model.decoder().output_shape() == (std::vector<std::size_t>{1, 64}));
  CHECK(model.encoder().parameter_count() == 70 + 820 + (1120 * 32 + 32));
  CHECK(model.decoder().parameter_count() == (16 * 1120 + 1120) + 810 + 61);
  CHECK(!model.trained);

  CHECK_THROWS_AS(disagg::Cvae({8, 4, 0.1}, 1), InvalidArgument);
  CHECK_THROWS_AS(disagg::Cvae({64, 0, 0.1}, 1), InvalidArgument);
  CHECK_THROWS_AS(disagg::Cvae({64, 16, -0.5}, 1), InvalidArgument);
}

TEST_CASE("loss decomposes into reconstruction and weighted divergence") {
  disagg::Cvae model({16, 4, 0.25}, 9);
  Rng rng(100);
  nn::Tensor x({3, 16});
  nn::Tensor y({3, 16});
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = 0.3 * rng.normal();
  nn::Tensor zero_eps({3, 4});

  const auto parts = model.loss_for(x, y, zero_eps);
  CHECK(parts.total ==
        doctest::Approx(parts.recon + 0.25 * parts.kl).epsilon(1e-12));
  CHECK(parts.kl >= 0.0);

  // With zero noise the sampled code is the mean, so the reconstruction term
  // must match the deterministic path exactly: the mean square error over
  // every window sample.
  const auto rec = model.reconstruct(x);
  double sq = 0.0;
  for (std::size_t i = 0; i < rec.numel(); ++i) {
    sq += (rec[i] - y[i]) * (rec[i] - y[i]);
  }
  CHECK(parts.recon ==
        doctest::Approx(sq / static_cast<double>(rec.numel())).epsilon(1e-12));

  nn::Tensor bad_eps({3, 5});
  CHECK_THROWS_AS(std::ignore = model.loss_for(x, y, bad_eps), ShapeError);
  nn::Tensor bad_y({3, 15});
  CHECK_THROWS_AS(std::ignore = model.loss_for(x, bad_y, zero_eps), ShapeError);
}

TEST_CASE("analytic gradients match central differences through the sampler") {
  disagg::Cvae model({16, 4, 0.1}, 21);
  Rng rng(77);
  nn::Tensor x({3, 16});
  nn::Tensor y({3, 16});
  nn::Tensor eps({3, 4});
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = 0.5 * rng.normal();
  for (auto& v : eps.data) v = rng.normal();

  std::ignore = model.backprop(x, y, eps);
  // Freeze analytic gradients before probing; loss_for never writes them.
  const auto snap = [](nn::Network& net) {
    std::vector<std::vector<nn::Tensor>> g;
    for (std::size_t li = 0; li < net.layers().size(); ++li) g.push_back(net.grads(li));
    return g;
  };
  const auto enc_grads = snap(model.encoder());
  const auto dec_grads = snap(model.decoder());

  const double h = 1e-5;
  double worst = 0.0;
  const auto probe = [&](nn::Network& net, const std::vector<std::vector<nn::Tensor>>& grads) {
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      for (std::size_t pi = 0; pi < net.params(li).size(); ++pi) {
        auto& tensor = net.params(li)[pi];
        for (std::size_t idx = 0; idx < tensor.numel(); ++idx) {
          const double keep = tensor[idx];
          tensor[idx] = keep + h;
          const double up = model.loss_for(x, y, eps).total;
          tensor[idx] = keep - h;
          const double dn = model.loss_for(x, y, eps).total;
          tensor[idx] = keep;
          const double fd = (up - dn) / (2.0 * h);
          const double an = grads[li][pi][idx];
          const double rel =
              std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
          worst = std::max(worst, rel);
        }
      }
    }
  };
  probe(model.encoder(), enc_grads);
  probe(model.decoder(), dec_grads);
  CHECK(worst <= 1e-4);
}

TEST_CASE("the logvar clamp saturates cleanly instead of overflowing") {
  disagg::Cvae model({16, 4, 0.1}, 33);
  // Pin one logvar output far past the representable range via its bias.
  auto& bias = model.encoder().params(4)[1];
  const std::size_t lv_slot = 4 + 1;  // second latent's logvar
  bias[lv_slot] = 50.0;

  Rng rng(8);
  nn::Tensor x({2, 16});
  nn::Tensor y({2, 16});
  nn::Tensor eps({2, 4});
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : eps.data) v = rng.normal();

  const auto parts = model.backprop(x, y, eps);
  CHECK(std::isfinite(parts.total));
  CHECK(std::isfinite(parts.kl));
  // The clamp has zero slope there, so the bias must receive no gradient.
  CHECK(model.encoder().grads(4)[1][lv_slot] == 0.0);
}

TEST_CASE("training reduces the objective deterministically") {
  disagg::DisaggCorpusOptions copt;
  copt.windows = 192;
  copt.window = 24;
  const auto data = disagg::build_disagg_corpus(copt, 606);

  disagg::DisaggTrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 32;
  cfg.learning_rate = 2e-3;
  cfg.seed = 4;

  disagg::Cvae model({24, 6, 0.1}, 1);
  const auto hist = disagg::train_cvae(model, data, cfg);
  REQUIRE(hist.size() == 6);
  CHECK(hist.back() < hist.front());
  CHECK(model.trained);

  disagg::Cvae twin({24, 6, 0.1}, 1);
  const auto hist2 = disagg::train_cvae(twin, data, cfg);
  CHECK(hist == hist2);
  const auto ra = model.reconstruct(data.inputs);
  const auto rb = twin.reconstruct(data.inputs);
  CHECK(ra.data == rb.data);

  const auto score = disagg::score_disagg(model, data);
  CHECK(score.mae_w >= 0.0);
  CHECK(std::isfinite(score.sae));

  // Per-window inference in watts: right length, non-negative everywhere.
  std::vector<double> one(data.window());
  for (std::size_t j = 0; j < one.size(); ++j) {
    one[j] = data.inputs[j] * data.scale[0] + data.offset[0];
  }
  const auto watts = disagg::disaggregate_window(model, one);
  REQUIRE(watts.size() == 24);
  for (double w : watts) CHECK(w >= 0.0);
  const std::vector<double> wrong(10, 0.0);
  CHECK_THROWS_AS(std::ignore = disagg::disaggregate_window(model, wrong), ShapeError);
}

TEST_CASE("training and scoring reject unusable inputs") {
  disagg::Cvae model({24, 6, 0.1}, 1);
  disagg::WindowSet empty;
  disagg::DisaggTrainConfig cfg;
  CHECK_THROWS_AS(std::ignore = disagg::train_cvae(model, empty, cfg), InvalidArgument);
  CHECK_THROWS_AS(std::ignore = disagg::score_disagg(model, empty), InvalidArgument);

  disagg::WindowSet narrow;
  std::vector<double> w(16, 1.0);
  disagg::append_window(narrow, w, {});
  CHECK_THROWS_AS(std::ignore = disagg::train_cvae(model, narrow, cfg), ShapeError);

  disagg::WindowSet no_energy;
  std::vector<double> w24(24, 5.0);
  disagg::append_window(no_energy, w24, {});
  CHECK_THROWS_AS(std::ignore = disagg::score_disagg(model, no_energy), InvalidArgument);

  cfg.epochs = 0;
  disagg::WindowSet ok;
  disagg::append_window(ok, w24, {});
  disagg::append_window(ok, w24, {});
  CHECK_THROWS_AS(std::ignore = disagg::train_cvae(model, ok, cfg), InvalidArgument);
}

TEST_CASE("a saved model reloads bit-identically") {
  disagg::Cvae model({16, 4, 0.2}, 12);
  model.trained = true;
  Rng rng(55);
  nn::Tensor x({2, 16});
  for (auto& v : x.data) v = rng.normal();
  const auto before = model.reconstruct(x);

  std::stringstream buf;
  disagg::save_cvae(model, buf);
  auto back = disagg::load_cvae(buf);
  CHECK(back.spec().window == 16);
  CHECK(back.spec().latent == 4);
  CHECK(back.spec().kl_weight == doctest::Approx(0.2));
  CHECK(back.trained);
  const auto after = back.reconstruct(x);
  CHECK(before.data == after.data);

  // Serialisation itself is deterministic.
  std::stringstream again;
  disagg::save_cvae(model, again);
  std::stringstream reference;
  disagg::save_cvae(model, reference);
  CHECK(again.str() == reference.str());
}

TEST_CASE("foreign or damaged model files are rejected") {
  std::stringstream garbage("not json at all");
  CHECK_THROWS_AS(std::ignore = disagg::load_cvae(garbage), FormatError);

  std::stringstream alien(R"({"format":"something-else","version":1})");
  CHECK_THROWS_AS(std::ignore = disagg::load_cvae(alien), FormatError);

  disagg::Cvae model({16, 4, 0.1}, 3);
  std::stringstream buf;
  disagg::save_cvae(model, buf);
  auto text = buf.str();

  auto bumped = text;
  bumped.replace(bumped.find("\"version\": 1"), 12, "\"version\": 2");
  std::stringstream vb(bumped);
  CHECK_THROWS_AS(std::ignore = disagg::load_cvae(vb), FormatError);

  auto lied = text;
  lied.replace(lied.find("\"window\": 16"), 12, "\"window\": 99");
  std::stringstream wb(lied);
  CHECK_THROWS_AS(std::ignore = disagg::load_cvae(wb), FormatError);
}

TEST_CASE("error metrics follow their definitions") {
  const std::vector<double> y{100.0, 0.0, 50.0, 250.0};
  CHECK(disagg::mae(y, y) == 0.0);
  CHECK(disagg::sae(y, y) == 0.0);

  auto plus5 = y;
  for (auto& v : plus5) v += 5.0;
  CHECK(disagg::mae(y, plus5) == doctest::Approx(5.0).epsilon(1e-12));

  auto scaled = y;
  for (auto& v : scaled) v *= 1.1;
  CHECK(disagg::sae(y, scaled) == doctest::Approx(0.1).epsilon(1e-12));

  const std::vector<double> idle(4, 0.0);
  CHECK_THROWS_AS(std::ignore = disagg::sae(idle, y), InvalidArgument);
  const std::vector<double> shorter{1.0, 2.0};
  CHECK_THROWS_AS(std::ignore = disagg::mae(y, shorter), ShapeError);
  CHECK_THROWS_AS(std::ignore = disagg::sae(y, shorter), ShapeError);
  CHECK_THROWS_AS(std::ignore = disagg::mae({}, {}), ShapeError);
}

TEST_CASE("posterior heads read straight off the encoder output") {
  disagg::Cvae model({16, 4, 0.1}, 40);
  Rng rng(8);
  std::vector<double> x(16);
  for (auto& v : x) v = rng.normal();

  nn::Tensor xt({1, 16});
  std::copy(x.begin(), x.end(), xt.data.begin());
  const auto raw = model.encoder().forward(xt, nn::Mode::infer);

  const auto p = disagg::encode(model, x);
  REQUIRE(p.mu.size() == 4);
  REQUIRE(p.logvar.size() == 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(p.mu[j] == doctest::Approx(raw[j]).epsilon(1e-12));
    CHECK(p.logvar[j] == doctest::Approx(raw[4 + j]).epsilon(1e-12));
  }
  CHECK(p.eps.empty());
  CHECK(p.z.empty());

  // With every weight zeroed the heads are exactly the head biases.
  for (std::size_t layer : {0u, 2u, 4u}) {
    for (auto& v : model.encoder().params(layer)[0].data) v = 0.0;
  }
  auto& bias = model.encoder().params(4)[1];
  for (std::size_t j = 0; j < 8; ++j) bias[j] = 0.25 * static_cast<double>(j) - 1.0;
  const auto q = disagg::encode(model, x);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(q.mu[j] == bias[j]);
    CHECK(q.logvar[j] == bias[4 + j]);
  }

  const std::vector<double> wrong(10, 0.0);
  CHECK_THROWS_AS(std::ignore = disagg::encode(model, wrong), ShapeError);
}

TEST_CASE("latent sampling is standard normal and reproducible") {
  disagg::LatentParams p;
  p.mu = {0.0};
  p.logvar = {0.0};

  double sum = 0.0;
  double sq = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto z = disagg::reparameterize(p, static_cast<std::uint64_t>(k));
    REQUIRE(z.size() == 1);
    CHECK(z[0] == p.eps[0]);  // unit scale, zero shift
    sum += z[0];
    sq += z[0] * z[0];
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);

  // Same seed, same draw; the affine map is exact.
  disagg::LatentParams q;
  q.mu = {2.0, -1.0};
  q.logvar = {std::log(4.0), 0.0};
  const auto z1 = disagg::reparameterize(q, 99);
  const auto e1 = q.eps;
  const auto z2 = disagg::reparameterize(q, 99);
  CHECK(z1 == z2);
  CHECK(z1[0] == doctest::Approx(2.0 + 2.0 * e1[0]).epsilon(1e-15));
  CHECK(z1[1] == doctest::Approx(-1.0 + e1[1]).epsilon(1e-15));

  disagg::LatentParams bad;
  bad.mu = {0.0, 1.0};
  bad.logvar = {0.0};
  CHECK_THROWS_AS(std::ignore = disagg::reparameterize(bad, 0), ShapeError);
}

TEST_CASE("decoded windows come back at the configured length") {
  for (std::size_t t : {64u, 128u, 256u}) {
    disagg::Cvae model({t, 16, 0.1}, 5);
    const std::vector<double> z(16, 0.1);
    CHECK(disagg::decode(model, z).size() == t);
  }
  disagg::Cvae model({64, 16, 0.1}, 5);
  const std::vector<double> wrong(3, 0.0);
  CHECK_THROWS_AS(std::ignore = disagg::decode(model, wrong), ShapeError);
}

TEST_CASE("the single-window objective matches the batched path") {
  disagg::Cvae model({16, 4, 0.25}, 9);
  Rng rng(123);
  std::vector<double> x(16);
  std::vector<double> y(16);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = 0.5 * rng.normal();

  auto p = disagg::encode(model, x);
  std::ignore = disagg::reparameterize(p, 77);
  nn::Tensor xt({1, 16});
  nn::Tensor yt({1, 16});
  nn::Tensor et({1, 4});
  std::copy(x.begin(), x.end(), xt.data.begin());
  std::copy(y.begin(), y.end(), yt.data.begin());
  std::copy(p.eps.begin(), p.eps.end(), et.data.begin());

  const auto batched = model.loss_for(xt, yt, et);
  const auto single = disagg::cvae_loss(model, x, y, 0.25, 77);
  CHECK(single.total == doctest::Approx(batched.total).epsilon(1e-12));
  CHECK(single.recon == doctest::Approx(batched.recon).epsilon(1e-12));
  CHECK(single.kl == doctest::Approx(batched.kl).epsilon(1e-12));

  // Zero weight drops the divergence term from the objective entirely.
  const auto free = disagg::cvae_loss(model, x, y, 0.0, 77);
  CHECK(free.total == doctest::Approx(free.recon).epsilon(1e-15));
  CHECK(free.kl == doctest::Approx(single.kl).epsilon(1e-12));

  CHECK_THROWS_AS(std::ignore = disagg::cvae_loss(model, x, y, -0.1, 0), InvalidArgument);
  const std::vector<double> bad(7, 0.0);
  CHECK_THROWS_AS(std::ignore = disagg::cvae_loss(model, x, bad, 0.1, 0), ShapeError);
}

TEST_CASE("a model is tied to the appliance it was trained for") {
  disagg::DisaggCorpusOptions opt;
  opt.windows = 8;
  opt.window = 24;
  opt.appliance = sim::Appliance::kettle;
  const auto kettle = disagg::build_disagg_corpus(opt, 5);
  CHECK(kettle.appliance == "kettle");
  opt.appliance = sim::Appliance::fridge;
  const auto fridge = disagg::build_disagg_corpus(opt, 5);
  CHECK(fridge.appliance == "fridge");

  disagg::Cvae model({24, 4, 0.1}, 2);
  CHECK(model.appliance.empty());
  disagg::DisaggTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  std::ignore = disagg::train_cvae(model, kettle, cfg);
  CHECK(model.appliance == "kettle");
  CHECK_THROWS_AS(std::ignore = disagg::train_cvae(model, fridge, cfg), InvalidArgument);

  std::stringstream buf;
  disagg::save_cvae(model, buf);
  const auto back = disagg::load_cvae(buf);
  CHECK(back.appliance == "kettle");
}

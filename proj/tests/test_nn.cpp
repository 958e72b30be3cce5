#include "gridmon/nn.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "gridmon/errors.hpp"
#include "gridmon/rng.hpp"

using namespace gridmon;
using nn::LayerSpec;
using nn::Mode;
using nn::Network;
using nn::Tensor;

namespace {

Tensor tensor(std::vector<std::size_t> shape, std::vector<double> data) {
  Tensor t(std::move(shape));
  REQUIRE(t.numel() == data.size());
  t.data = std::move(data);
  return t;
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, scale);
  return t;
}

Tensor one_hot_rows(Rng& rng, std::size_t n, std::size_t k) {
  Tensor t({n, k});
  for (std::size_t b = 0; b < n; ++b)
    t[b * k + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1))] =
        1.0;
  return t;
}

}  // namespace

TEST_CASE("conv2d matches hand counts and the direct sum oracle") {
  Network net({1, 3, 3}, {nn::conv2d(1, 1, 2, 2)}, 1);
  net.params(0)[0] = tensor({1, 1, 2, 2}, {1, 1, 1, 1});
  net.params(0)[1] = tensor({1}, {0});
  const auto out = net.forward(tensor({1, 1, 3, 3}, std::vector<double>(9, 1.0)));
  REQUIRE(out.shape == std::vector<std::size_t>{1, 1, 2, 2});
  for (const double v : out.data) CHECK(v == doctest::Approx(4.0));

  // 1x1 identity filter passes the input through.
  Network id({1, 3, 3}, {nn::conv2d(1, 1, 1, 1)}, 1);
  id.params(0)[0] = tensor({1, 1, 1, 1}, {1});
  id.params(0)[1] = tensor({1}, {0});
  Rng rng(7);
  const auto x = random_tensor(rng, {2, 1, 3, 3});
  const auto y = id.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]));

  // Seeded 1x8x6 input, four 2x2 filters, against an explicit quadruple loop.
  Network conv({1, 8, 6}, {nn::conv2d(4, 1, 2, 2)}, 3);
  const auto in = random_tensor(rng, {2, 1, 8, 6});
  const auto got = conv.forward(in);
  const auto& w = conv.params(0)[0];
  const auto& b = conv.params(0)[1];
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 4; ++f)
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t q = 0; q < 5; ++q) {
          double acc = b[f];
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
              acc += in[(n * 8 + r + i) * 6 + q + j] * w[(f * 2 + i) * 2 + j];
          CHECK(got[((n * 4 + f) * 7 + r) * 5 + q] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv1d and its transpose follow the worked examples") {
  Network c({1, 3}, {nn::conv1d(1, 1, 2)}, 1);
  c.params(0)[0] = tensor({1, 1, 2}, {1, 1});
  c.params(0)[1] = tensor({1}, {0});
  const auto y = c.forward(tensor({1, 1, 3}, {1, 2, 3}));
  REQUIRE(y.numel() == 2);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(5.0));

  Network t({1, 1}, {nn::transposed_conv1d(1, 1, 3)}, 1);
  t.params(0)[0] = tensor({1, 1, 3}, {1, 2, 3});
  t.params(0)[1] = tensor({1}, {0});
  const auto z = t.forward(tensor({1, 1, 1}, {1}));
  REQUIRE(z.numel() == 3);
  CHECK(z[0] == doctest::Approx(1.0));
  CHECK(z[1] == doctest::Approx(2.0));
  CHECK(z[2] == doctest::Approx(3.0));
}

TEST_CASE("transposed_conv1d is the adjoint of conv1d") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    Rng rng(derive_seed(100, seed));
    const std::size_t cin = 1 + seed % 3;
    const std::size_t cout = 1 + (seed / 3) % 3;
    const std::size_t k = 2 + seed % 4;
    const std::size_t len = k + 3 + seed % 5;
    const std::size_t stride = 1 + seed % 2;

    Network fwd({cin, len}, {nn::conv1d(cout, cin, k, stride)}, seed);
    for (double& v : fwd.params(0)[1].data) v = 0.0;
    const std::size_t out_len = (len - k) / stride + 1;

    // Transposed weights swap the channel axes of the same filter bank.
    Network adj({cout, out_len}, {nn::transposed_conv1d(cout, cin, k, stride)}, seed + 1);
    for (double& v : adj.params(0)[1].data) v = 0.0;
    const auto& w = fwd.params(0)[0];
    auto& wt = adj.params(0)[0];
    for (std::size_t f = 0; f < cout; ++f)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t q = 0; q < k; ++q)
          wt[(f * cin + c) * k + q] = w[(f * cin + c) * k + q];

    const auto x = random_tensor(rng, {1, cin, len});
    const auto yprobe = random_tensor(rng, {1, cout, out_len});
    const auto cx = fwd.forward(x);
    const auto ay = adj.forward(yprobe);
    // Input positions past the last conv window are never read, so the
    // adjoint lives on the first (out_len-1)*stride+k samples per channel.
    const std::size_t span = (out_len - 1) * stride + k;
    REQUIRE(ay.numel() == cin * span);
    REQUIRE(span <= len);

    double lhs = 0.0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * yprobe[i];
    double rhs = 0.0;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t i = 0; i < span; ++i) rhs += x[c * len + i] * ay[c * span + i];
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("batchnorm standardises per channel and scales back") {
  Network net({1}, {nn::batchnorm(1)}, 1);
  auto out = net.forward(tensor({2, 1}, {3.0, 7.0}), Mode::train);
  CHECK(out[0] + out[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(out[1] - out[0] == doctest::Approx(2.0).epsilon(1e-2));  // unit variance, eps-sized slack

  net.params(0)[0] = tensor({1}, {2.0});  // gamma
  net.params(0)[1] = tensor({1}, {3.0});  // beta
  out = net.forward(tensor({2, 1}, {3.0, 7.0}), Mode::train);
  CHECK((out[0] + out[1]) / 2.0 == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(out[1] - out[0] == doctest::Approx(4.0).epsilon(1e-2));

  // Seeded batch against the direct definition.
  Rng rng(5);
  Network wide({3, 4}, {nn::batchnorm(3)}, 1);
  const auto x = random_tensor(rng, {4, 3, 4}, 2.5);
  const auto y = wide.forward(x, Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t s = 0; s < 4; ++s) mean += x[(n * 3 + c) * 4 + s] / 16.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t s = 0; s < 4; ++s) {
        const double d = x[(n * 3 + c) * 4 + s] - mean;
        var += d * d / 16.0;
      }
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t s = 0; s < 4; ++s) {
        const double want = (x[(n * 3 + c) * 4 + s] - mean) / std::sqrt(var + 1e-5);
        CHECK(y[(n * 3 + c) * 4 + s] == doctest::Approx(want).epsilon(1e-10));
      }
  }

  CHECK_THROWS_AS(std::ignore = wide.forward(random_tensor(rng, {1, 3, 4}), Mode::train),
                  StatisticsError);
}

TEST_CASE("batchnorm infer mode is a fixed affine map") {
  Rng rng(6);
  Network net({2}, {nn::batchnorm(2)}, 1);
  // Train once so running stats move off their defaults.
  std::ignore = net.forward(random_tensor(rng, {8, 2}, 3.0), Mode::train);
  const auto a = random_tensor(rng, {2, 2});
  Tensor b = a;
  b.data[0] += 100.0;  // a different batch must not change a's outputs
  const auto ya = net.forward(a, Mode::infer);
  const auto yb = net.forward(b, Mode::infer);
  CHECK(ya[1] == doctest::Approx(yb[1]).epsilon(1e-15));
  CHECK(ya[2] == doctest::Approx(yb[2]).epsilon(1e-15));
  CHECK(ya[3] == doctest::Approx(yb[3]).epsilon(1e-15));
}

TEST_CASE("maxpool, relu and softmax follow their definitions") {
  Network pool({1, 2, 2}, {nn::maxpool2x2()}, 1);
  const auto p = pool.forward(tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  REQUIRE(p.numel() == 1);
  CHECK(p[0] == doctest::Approx(4.0));

  Network sm({2}, {nn::softmax()}, 1);
  const auto s = sm.forward(tensor({1, 2}, {0.0, 0.0}));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));

  // Shift invariance.
  const auto s1 = sm.forward(tensor({1, 2}, {0.3, -1.2}));
  const auto s2 = sm.forward(tensor({1, 2}, {0.3 + 55.0, -1.2 + 55.0}));
  CHECK(s1[0] == doctest::Approx(s2[0]).epsilon(1e-12));
  CHECK(s1[1] == doctest::Approx(s2[1]).epsilon(1e-12));
  CHECK(s1[0] + s1[1] == doctest::Approx(1.0).epsilon(1e-9));

  Network rl({3}, {nn::relu()}, 1);
  const auto r = rl.forward(tensor({1, 3}, {-1.0, 0.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
}

TEST_CASE("network construction validates the whole shape chain") {
  CHECK_NOTHROW(Network({1, 8, 6},
                        {nn::conv2d(4, 1, 2, 2), nn::batchnorm(4), nn::relu(),
                         nn::maxpool2x2(), nn::conv2d(6, 4, 2, 2), nn::batchnorm(6),
                         nn::relu(), nn::dense(12, 2), nn::softmax()},
                        1));
  // Wrong channel count.
  CHECK_THROWS_AS(Network({1, 8, 6}, {nn::conv2d(4, 2, 2, 2)}, 1), ShapeError);
  // Dense size mismatch.
  CHECK_THROWS_AS(Network({1, 8, 6}, {nn::conv2d(4, 1, 2, 2), nn::dense(12, 2)}, 1),
                  ShapeError);
  // Kernel larger than input.
  CHECK_THROWS_AS(Network({1, 2, 2}, {nn::conv2d(1, 1, 3, 3)}, 1), ShapeError);
  // Softmax needs vectors.
  CHECK_THROWS_AS(Network({1, 8, 6}, {nn::softmax()}, 1), ShapeError);

  Network ok({1, 8, 6}, {nn::conv2d(4, 1, 2, 2)}, 1);
  CHECK(ok.output_shape() == std::vector<std::size_t>{4, 7, 5});
  CHECK(ok.parameter_count() == 4 * 1 * 2 * 2 + 4);
  CHECK_THROWS_AS(std::ignore = ok.forward(Tensor({1, 1, 8, 5})), ShapeError);
}

TEST_CASE("losses match their closed forms") {
  const auto pred = tensor({1, 3}, {0.2, 0.5, 0.3});
  const auto target = tensor({1, 3}, {0.0, 1.0, 0.0});
  const auto ce = nn::cross_entropy(pred, target);
  CHECK(ce.value == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  CHECK(ce.grad[1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(ce.grad[0] == 0.0);

  // Exact one-hot prediction costs zero after the clamp.
  const auto zero = nn::cross_entropy(tensor({1, 2}, {1.0, 0.0}), tensor({1, 2}, {1.0, 0.0}));
  CHECK(std::abs(zero.value) < 1e-9);

  CHECK_THROWS_AS(std::ignore = nn::cross_entropy(tensor({1, 2}, {0.9, 0.4}), target),
                  ShapeError);
  CHECK_THROWS_AS(
      std::ignore = nn::cross_entropy(tensor({1, 3}, {0.9, 0.4, 0.2}), target),
      InvalidArgument);
  CHECK_THROWS_AS(
      std::ignore = nn::cross_entropy(tensor({1, 3}, {1.1, -0.05, -0.05}), target),
      InvalidArgument);

  const auto m = nn::mse(tensor({2, 2}, {1, 2, 3, 4}), tensor({2, 2}, {0, 2, 3, 2}));
  CHECK(m.value == doctest::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0));
  CHECK(m.grad[3] == doctest::Approx(2.0 * 2.0 / 4.0));

  const auto kl0 = nn::kl_gaussian(tensor({1, 2}, {0, 0}), tensor({1, 2}, {0, 0}));
  CHECK(kl0.value == doctest::Approx(0.0));
  const auto kl = nn::kl_gaussian(tensor({1, 1}, {0.7}), tensor({1, 1}, {-0.4}));
  CHECK(kl.value ==
        doctest::Approx(0.5 * (0.49 + std::exp(-0.4) + 0.4 - 1.0)).epsilon(1e-12));
  CHECK(kl.grad_mu[0] == doctest::Approx(0.7));
  CHECK(kl.grad_logvar[0] == doctest::Approx(0.5 * (std::exp(-0.4) - 1.0)));
}

TEST_CASE("closed-form KL matches Monte-Carlo sampling") {
  // KL(N(mu,s2) || N(0,1)) estimated as the mean of log q(z) - log p(z).
  Rng rng(88);
  const double mu = 0.8, logvar = -0.7;
  const auto closed = nn::kl_gaussian(tensor({1, 1}, {mu}), tensor({1, 1}, {logvar}));
  const double sd = std::exp(0.5 * logvar);
  double acc = 0.0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) {
    const double z = mu + sd * rng.normal();
    const double logq = -0.5 * ((z - mu) * (z - mu) / (sd * sd) + logvar);
    const double logp = -0.5 * (z * z);
    acc += logq - logp;
  }
  acc /= static_cast<double>(draws);
  CHECK(acc == doctest::Approx(closed.value).epsilon(0.03));
}

TEST_CASE("analytic gradients agree with central finite differences") {
  struct Case {
    const char* name;
    std::vector<std::size_t> input;
    std::vector<LayerSpec> layers;
  };
  const std::vector<Case> cases = {
      {"conv2d+pool", {2, 5, 4}, {nn::conv2d(3, 2, 2, 2), nn::relu(), nn::maxpool2x2(),
                                  nn::dense(6, 4), nn::softmax()}},
      {"conv1d", {2, 9}, {nn::conv1d(4, 2, 3), nn::relu(), nn::dense(28, 4), nn::softmax()}},
      {"tconv1d", {2, 4}, {nn::transposed_conv1d(2, 3, 3), nn::relu(), nn::dense(18, 4),
                           nn::softmax()}},
      {"batchnorm", {6}, {nn::dense(6, 8), nn::batchnorm(8), nn::relu(), nn::dense(8, 4),
                          nn::softmax()}},
      {"dense", {5}, {nn::dense(5, 4), nn::softmax()}},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      CAPTURE(c.name);
      CAPTURE(seed);
      Network net(c.input, c.layers, derive_seed(500, seed));
      Rng rng(derive_seed(501, seed));
      std::vector<std::size_t> bshape{3};
      bshape.insert(bshape.end(), c.input.begin(), c.input.end());
      const auto x = random_tensor(rng, bshape);
      const auto t = one_hot_rows(rng, 3, 4);
      CHECK(nn::max_grad_rel_error(net, x, t, nn::LossKind::cross_entropy, Mode::train) <=
            1e-4);

      Tensor mse_target = random_tensor(rng, bshape);
      // Reuse the same nets without the softmax head for the mse loss.
      std::vector<LayerSpec> trunk(c.layers.begin(), c.layers.end() - 1);
      Network net2(c.input, trunk, derive_seed(502, seed));
      Tensor out_shape_probe = net2.forward(x);
      const auto mt = random_tensor(rng, out_shape_probe.shape);
      CHECK(nn::max_grad_rel_error(net2, x, mt, nn::LossKind::mse, Mode::train) <= 1e-4);
    }
  }
}

TEST_CASE("zero loss gradient produces zero parameter gradients") {
  Network net({1, 4, 4}, {nn::conv2d(2, 1, 2, 2), nn::relu(), nn::dense(18, 3),
                          nn::softmax()},
              9);
  Rng rng(10);
  const auto x = random_tensor(rng, {2, 1, 4, 4});
  const auto out = net.forward(x);
  std::ignore = net.backward(Tensor(out.shape));
  for (std::size_t li = 0; li < net.layers().size(); ++li)
    for (const auto& g : net.grads(li))
      for (const double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("backward before forward is rejected") {
  Network net({4}, {nn::dense(4, 2), nn::softmax()}, 1);
  CHECK_THROWS_AS(std::ignore = net.backward(Tensor({1, 2})), StateError);
  std::ignore = net.forward(Tensor({1, 4}));
  CHECK_THROWS_AS(std::ignore = net.backward(Tensor({1, 3})), ShapeError);
}

TEST_CASE("sgd and adam update parameters per definition") {
  Network net({1}, {nn::dense(1, 1)}, 1);
  net.params(0)[0] = tensor({1, 1}, {1.0});
  net.params(0)[1] = tensor({1}, {0.0});
  net.grads(0).clear();
  net.grads(0).push_back(tensor({1, 1}, {0.5}));
  net.grads(0).push_back(tensor({1}, {0.0}));
  nn::Sgd{0.1}.step(net);
  CHECK(net.params(0)[0][0] == doctest::Approx(0.95));

  // Zero gradient moves nothing.
  net.grads(0)[0][0] = 0.0;
  nn::Sgd{0.1}.step(net);
  CHECK(net.params(0)[0][0] == doctest::Approx(0.95));
  nn::Adam adam_still(0.1);
  adam_still.step(net);
  CHECK(net.params(0)[0][0] == doctest::Approx(0.95));

  // Adam walks down a quadratic bowl f(w) = w^2.
  Network bowl({1}, {nn::dense(1, 1)}, 1);
  bowl.params(0)[0] = tensor({1, 1}, {3.0});
  bowl.params(0)[1] = tensor({1}, {0.0});
  nn::Adam adam(0.1);
  for (int i = 0; i < 100; ++i) {
    bowl.grads(0).clear();
    bowl.grads(0).push_back(tensor({1, 1}, {2.0 * bowl.params(0)[0][0]}));
    bowl.grads(0).push_back(tensor({1}, {0.0}));
    adam.step(bowl);
  }
  CHECK(std::abs(bowl.params(0)[0][0]) < 0.1);

  Network fresh({1}, {nn::dense(1, 1)}, 1);
  CHECK_THROWS_AS(nn::Sgd{0.1}.step(fresh), StateError);
}

TEST_CASE("training separates a linearly separable toy set") {
  Rng rng(123);
  const std::size_t n = 80;
  nn::Dataset data;
  data.inputs = Tensor({n, 2});
  data.targets = Tensor({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const bool hi = i % 2 == 0;
    data.inputs[i * 2] = rng.normal(hi ? 2.0 : -2.0, 0.4);
    data.inputs[i * 2 + 1] = rng.normal(hi ? -1.0 : 1.0, 0.4);
    data.targets[i * 2 + (hi ? 0 : 1)] = 1.0;
  }
  Network net({2}, {nn::dense(2, 8), nn::relu(), nn::dense(8, 2), nn::softmax()}, 77);
  nn::TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 16;
  cfg.epochs = 40;
  cfg.seed = 9;
  const auto history = train(net, data, cfg);
  REQUIRE(history.size() == 40);
  CHECK(history.back() < history.front());

  std::size_t correct = 0;
  const auto out = net.forward(data.inputs);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pick = out[i * 2] > out[i * 2 + 1] ? 0 : 1;
    const std::size_t want = data.targets[i * 2] > 0.5 ? 0 : 1;
    correct += pick == want;
  }
  CHECK(correct == n);

  // Zero learning rate freezes parameters.
  Network frozen({2}, {nn::dense(2, 8), nn::relu(), nn::dense(8, 2), nn::softmax()}, 77);
  const auto before = frozen.params(0)[0];
  auto cfg0 = cfg;
  cfg0.learning_rate = 0.0;
  cfg0.optimizer = nn::Optimizer::sgd;
  std::ignore = train(frozen, data, cfg0);
  for (std::size_t i = 0; i < before.numel(); ++i) CHECK(frozen.params(0)[0][i] == before[i]);

  // Same seed, bitwise-identical history.
  Network r1({2}, {nn::dense(2, 8), nn::relu(), nn::dense(8, 2), nn::softmax()}, 77);
  Network r2({2}, {nn::dense(2, 8), nn::relu(), nn::dense(8, 2), nn::softmax()}, 77);
  const auto h1 = train(r1, data, cfg);
  const auto h2 = train(r2, data, cfg);
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);

  CHECK_THROWS_AS(std::ignore = train(net, nn::Dataset{}, cfg), InvalidArgument);
}

TEST_CASE("model files round-trip bitwise") {
  Network net({1, 8, 6},
              {nn::conv2d(4, 1, 2, 2), nn::batchnorm(4), nn::relu(), nn::maxpool2x2(),
               nn::conv2d(6, 4, 2, 2), nn::batchnorm(6), nn::relu(), nn::dense(12, 3),
               nn::softmax()},
              42);
  net.meta_values["feature_mean"] = {0.5, -1.5, 2.25};
  net.meta_text["labels"] = "a,b,c";

  Rng rng(11);
  Tensor x = random_tensor(rng, {4, 1, 8, 6});
  // Move running stats off their defaults so state round-trips too.
  std::ignore = net.forward(x, Mode::train);
  const auto want = net.forward(x, Mode::infer);

  std::stringstream buf;
  nn::save_network(net, buf);
  const std::string text1 = buf.str();
  auto loaded = nn::load_network(buf);
  const auto got = loaded.forward(x, Mode::infer);
  REQUIRE(got.shape == want.shape);
  for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
  CHECK(loaded.meta_values["feature_mean"] == net.meta_values["feature_mean"]);
  CHECK(loaded.meta_text["labels"] == "a,b,c");

  // Saving is deterministic.
  std::stringstream buf2;
  nn::save_network(loaded, buf2);
  CHECK(buf2.str() == text1);
}

TEST_CASE("model files of foreign shape or version are rejected") {
  std::stringstream junk("not a model at all {");
  CHECK_THROWS_AS(std::ignore = nn::load_network(junk), FormatError);

  Network net({2}, {nn::dense(2, 2), nn::softmax()}, 1);
  std::stringstream buf;
  nn::save_network(net, buf);
  std::string text = buf.str();

  auto bump = text;
  bump.replace(bump.find("\"version\": 1"), 12, "\"version\": 2");
  std::stringstream v2(bump);
  CHECK_THROWS_AS(std::ignore = nn::load_network(v2), FormatError);

  auto alien = text;
  alien.replace(alien.find("gridmon-model"), 13, "something-else");
  std::stringstream af(alien);
  CHECK_THROWS_AS(std::ignore = nn::load_network(af), FormatError);

  auto badkind = text;
  badkind.replace(badkind.find("\"dense\""), 7, "\"dance\"");
  std::stringstream bk(badkind);
  CHECK_THROWS_AS(std::ignore = nn::load_network(bk), FormatError);
}

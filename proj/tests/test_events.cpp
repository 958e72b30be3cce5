#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "gridmon/errors.hpp"
#include "gridmon/events.hpp"
#include "gridmon/rng.hpp"
#include "gridmon/sim.hpp"
#include "gridmon/wavelet.hpp"
#include "helpers.hpp"

using namespace gridmon;
using namespace gridmon::events;

namespace {

// Exhaustive reference: every segmentation with up to three changepoints,
// costs summed directly, ties resolved smaller-count-first then
// lexicographically. Shares nothing with the production search.
struct OracleBest {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pos;
  bool set = false;
};

double oracle_segment(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double sumsq = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sumsq += x[i] * x[i];
  const double ms = std::max(sumsq / static_cast<double>(hi - lo), 1e-20);
  return static_cast<double>(hi - lo) * std::log(ms);
}

void oracle_consider(OracleBest& best, const std::vector<double>& x, double beta,
                     const std::vector<std::size_t>& pos) {
  std::vector<std::size_t> bounds = {0};
  bounds.insert(bounds.end(), pos.begin(), pos.end());
  bounds.push_back(x.size());
  double cost = beta * static_cast<double>(pos.size());
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i)
    cost += oracle_segment(x, bounds[i], bounds[i + 1]);
  const double tol = 1e-9 * std::max({1.0, std::abs(cost), std::abs(best.cost)});
  // Enumeration order is count-ascending and lexicographic, so a strict
  // improvement is the only way to replace the incumbent.
  if (!best.set || cost < best.cost - tol) {
    best = {cost, pos, true};
  }
}

OracleBest oracle_search(const std::vector<double>& x, double beta, std::size_t m) {
  const std::size_t n = x.size();
  OracleBest best;
  oracle_consider(best, x, beta, {});
  for (std::size_t a = m; a + m <= n; ++a) oracle_consider(best, x, beta, {a});
  for (std::size_t a = m; a + 2 * m <= n; ++a)
    for (std::size_t b = a + m; b + m <= n; ++b) oracle_consider(best, x, beta, {a, b});
  for (std::size_t a = m; a + 3 * m <= n; ++a)
    for (std::size_t b = a + m; b + 2 * m <= n; ++b)
      for (std::size_t c = b + m; c + m <= n; ++c)
        oracle_consider(best, x, beta, {a, b, c});
  return best;
}

std::vector<double> stepped_track(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  const int steps = static_cast<int>(rng.uniform_int(0, 3));
  std::vector<std::size_t> cuts;
  for (int s = 0; s < steps; ++s) cuts.push_back(rng.uniform_int(2, n - 2));
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(n);
  double level = 0.5 + 2.5 * rng.uniform();
  std::size_t at = 0;
  for (std::size_t cut : cuts) {
    for (; at < cut; ++at) x[at] = level + 0.05 * rng.normal();
    level = 0.5 + 2.5 * rng.uniform();
  }
  return x;
}

Frame as_frame(std::vector<double> values, double fs = 100.0) {
  Frame f;
  f.values = std::move(values);
  f.sample_rate_hz = fs;
  return f;
}

}  // namespace

TEST_CASE("segment cost matches direct evaluation") {
  std::vector<double> ones(4, 1.0);
  CHECK(segment_cost(ones) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> twos(2, 2.0);
  CHECK(segment_cost(twos) == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
  Rng rng(21);
  const auto x = testutil::random_vector(rng, 32, 1.3);
  CHECK(segment_cost(x) == doctest::Approx(oracle_segment(x, 0, 32)).epsilon(1e-12));
  std::vector<double> zeros(8, 0.0);
  CHECK(segment_cost(zeros) == doctest::Approx(8.0 * std::log(1e-20)).epsilon(1e-12));
  CHECK_THROWS_AS(std::ignore = segment_cost({}), InvalidArgument);
}

TEST_CASE("a homogeneous rms track stays unsplit") {
  // Half-cycle rms of a constant-amplitude tone is flat, so any split only
  // pays the penalty.
  const auto tone = testutil::sine(20000, 20000.0, 50.0, 3.0);
  std::vector<double> track;
  for (std::size_t s = 0; s + 200 <= tone.size(); s += 200) {
    double sumsq = 0.0;
    for (std::size_t i = s; i < s + 200; ++i) sumsq += tone[i] * tone[i];
    track.push_back(std::sqrt(sumsq / 200.0));
  }
  ChangepointConfig cfg;
  cfg.beta = 1.0;
  const auto res = detect_changepoints(as_frame(std::move(track)), cfg);
  CHECK(res.changepoints.empty());
}

TEST_CASE("an amplitude step lands a single changepoint at the edge") {
  Rng rng(5);
  std::vector<double> track(64);
  for (std::size_t i = 0; i < 64; ++i)
    track[i] = (i < 32 ? 1.0 : 4.0) + 0.01 * rng.normal();
  ChangepointConfig cfg;
  cfg.beta = 2.0;
  const auto res = detect_changepoints(as_frame(std::move(track)), cfg);
  REQUIRE(res.changepoints.size() == 1);
  CHECK(std::abs(static_cast<long>(res.changepoints[0]) - 32L) <= 1);
}

TEST_CASE("the search agrees with the exhaustive oracle and is monotone in the penalty") {
  const double betas[] = {0.5, 2.0, 8.0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(900, seed));
    const std::size_t n = 16 + static_cast<std::size_t>(rng.uniform_int(0, 48));
    const auto x = stepped_track(rng, n);
    std::size_t prev_k = std::numeric_limits<std::size_t>::max();
    for (double beta : betas) {
      CAPTURE(seed);
      CAPTURE(beta);
      ChangepointConfig cfg;
      cfg.beta = beta;
      cfg.max_changepoints = 3;
      const auto got = detect_changepoints(as_frame(x), cfg);
      const auto want = oracle_search(x, beta, cfg.min_segment);
      CHECK(got.changepoints == want.pos);
      CHECK(got.total_cost == doctest::Approx(want.cost).epsilon(1e-9));
      CHECK(got.changepoints.size() <= prev_k);
      prev_k = got.changepoints.size();
    }
  }
}

TEST_CASE("changepoint configuration is validated") {
  const auto x = as_frame(std::vector<double>(64, 1.0));
  ChangepointConfig cfg;
  cfg.min_segment = 40;
  CHECK_THROWS_AS(std::ignore = detect_changepoints(x, cfg), InvalidArgument);
  cfg.min_segment = 1;
  CHECK_THROWS_AS(std::ignore = detect_changepoints(x, cfg), InvalidArgument);
  cfg = {};
  cfg.beta = -1.0;
  CHECK_THROWS_AS(std::ignore = detect_changepoints(x, cfg), InvalidArgument);
  const auto tiny = as_frame(std::vector<double>(3, 1.0));
  CHECK_THROWS_AS(std::ignore = detect_changepoints(tiny, {}), InvalidArgument);
}

TEST_CASE("the changepoint cap restricts the answer to the best single split") {
  std::vector<double> track;
  for (double level : {1.0, 5.0, 1.0, 9.0})
    track.insert(track.end(), 16, level);
  ChangepointConfig cfg;
  cfg.beta = 2.0;
  cfg.max_changepoints = 1;
  const auto res = detect_changepoints(as_frame(track), cfg);
  REQUIRE(res.changepoints.size() == 1);
  const auto full = detect_changepoints(as_frame(track), [] {
    ChangepointConfig c;
    c.beta = 2.0;
    return c;
  }());
  CHECK(full.changepoints.size() == 3);
  CHECK(full.total_cost < res.total_cost);
}

namespace {

SampleStream with_ring(SampleStream base, std::size_t at, double amp, double ring_hz) {
  for (std::size_t t = at; t < std::min(base.samples.size(), at + 300); ++t) {
    const double dt = static_cast<double>(t - at);
    base.samples[t] += amp * std::exp(-dt / 80.0) *
                       std::sin(2.0 * std::numbers::pi * ring_hz * dt / base.sample_rate_hz);
  }
  return base;
}

}  // namespace

TEST_CASE("a clean tone produces no wavelet events") {
  const auto clean = sim::gen_load_current(5.0, std::numeric_limits<double>::infinity(),
                                           10000.0, 1.5, 1);
  CHECK(wavelet_event_detect(clean).empty());
}

TEST_CASE("steady noisy loads never false-trigger across 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    const auto s = sim::gen_load_current(5.0, 40.0, 10000.0, 1.0, derive_seed(31, seed));
    CHECK(wavelet_event_detect(s).empty());
  }
}

TEST_CASE("a switching transient is found once and near its onset") {
  sim::TransientConfig cfg;
  cfg.duration_s = 3.0;
  cfg.at_s = 0.8;
  const auto s = sim::gen_transient(sim::TransientKind::capacitor_switch, cfg, 4);
  const auto events = wavelet_event_detect(s);
  REQUIRE(events.size() == 1);
  CHECK(std::abs(events[0].index - 8000) <= 64);
  CHECK(events[0].burst_begin <= events[0].index);
  CHECK(events[0].index < events[0].burst_end);
  CHECK(events[0].peak_energy > 0.0);
}

TEST_CASE("two bursts half a second apart give exactly two events") {
  auto s = sim::gen_load_current(5.0, 50.0, 10000.0, 2.0, 7);
  s = with_ring(std::move(s), 6000, 1.0, 3500.0);
  s = with_ring(std::move(s), 11000, 1.0, 3500.0);
  const auto events = wavelet_event_detect(s);
  REQUIRE(events.size() == 2);
  CHECK(std::abs(events[0].index - 6000) <= 64);
  CHECK(std::abs(events[1].index - 11000) <= 64);
}

TEST_CASE("shifting the input shifts the detection") {
  Rng rng(13);
  auto noise_a = testutil::random_vector(rng, 9000, 0.01);
  auto noise_b = testutil::random_vector(rng, 9000, 0.01);
  SampleStream a;
  a.sample_rate_hz = 10000.0;
  a.samples = noise_a;
  a.samples.insert(a.samples.end(), noise_b.begin(), noise_b.end());
  auto b = a;
  b.samples.insert(b.samples.begin(), 2000, 0.0);
  a = with_ring(std::move(a), 9000, 1.0, 3500.0);
  b = with_ring(std::move(b), 11000, 1.0, 3500.0);
  const auto ea = wavelet_event_detect(a);
  const auto eb = wavelet_event_detect(b);
  REQUIRE(ea.size() == 1);
  REQUIRE(eb.size() == 1);
  CHECK(std::abs((eb[0].index - ea[0].index) - 2000) <= 64);
}

TEST_CASE("transient frames carry the 512 samples around the event") {
  SampleStream s;
  s.sample_rate_hz = 10000.0;
  s.samples.resize(10000);
  for (std::size_t i = 0; i < s.samples.size(); ++i)
    s.samples[i] = static_cast<double>(i);
  const auto f = extract_transient(s, 5000);
  REQUIRE(f.values.size() == 1024);
  CHECK(f.start_index == 4488);
  CHECK(f.values.front() == doctest::Approx(4488.0));
  CHECK(f.values.back() == doctest::Approx(5511.0));
  CHECK_THROWS_AS(std::ignore = extract_transient(s, 100), InvalidArgument);
  CHECK_THROWS_AS(std::ignore = extract_transient(s, 9600), InvalidArgument);
}

TEST_CASE("extraction round trip keeps the burst near the frame centre") {
  auto s = sim::gen_load_current(5.0, 50.0, 10000.0, 2.0, 9);
  s = with_ring(std::move(s), 9000, 1.0, 3500.0);
  const auto events = wavelet_event_detect(s);
  REQUIRE(events.size() == 1);
  const auto frame = extract_transient(s, events[0].index);
  const auto detail = wavelet::highband_extract(frame.values, wavelet::daubechies9());
  std::size_t peak = 0;
  for (std::size_t i = 0; i < detail.size(); ++i)
    if (detail[i] * detail[i] > detail[peak] * detail[peak]) peak = i;
  CHECK(std::abs(static_cast<long>(2 * peak) - 512L) <= 64);
}

TEST_CASE("state segmentation tiles the stream with alternating labels") {
  const auto clean = sim::gen_load_current(5.0, 50.0, 10000.0, 1.0, 2);
  const auto plain = segment_states(clean);
  REQUIRE(plain.segments.size() == 1);
  CHECK(plain.segments[0].begin == 0);
  CHECK(plain.segments[0].end == 10000);
  CHECK(plain.segments[0].label == StateLabel::steady);

  auto s = sim::gen_load_current(5.0, 50.0, 10000.0, 2.0, 3);
  s = with_ring(std::move(s), 9000, 1.0, 3500.0);
  const auto seg = segment_states(s);
  REQUIRE(seg.segments.size() == 3);
  CHECK(seg.segments[0].label == StateLabel::steady);
  CHECK(seg.segments[1].label == StateLabel::transient);
  CHECK(seg.segments[2].label == StateLabel::steady);
  CHECK(seg.segments[1].begin <= 9000);
  CHECK(seg.segments[1].end >= 9000);
  std::int64_t pos = 0;
  for (const auto& part : seg.segments) {
    CHECK(part.begin == pos);
    CHECK(part.begin < part.end);
    pos = part.end;
  }
  CHECK(pos == 20000);

  // Bursts closer than the merge distance collapse into one transient span.
  auto twin = sim::gen_load_current(5.0, 50.0, 10000.0, 2.0, 4);
  twin = with_ring(std::move(twin), 9000, 1.0, 3500.0);
  twin = with_ring(std::move(twin), 9600, 1.0, 3500.0);
  const auto merged = segment_states(twin);
  REQUIRE(merged.segments.size() == 3);
  CHECK(merged.segments[1].label == StateLabel::transient);
}

TEST_CASE("the combined detector unions both paths without duplicates") {
  sim::TransientConfig cfg;
  cfg.duration_s = 3.0;
  cfg.at_s = 1.2;
  cfg.magnitude = 3.0;
  const auto s = sim::gen_transient(sim::TransientKind::resistive_step, cfg, 6);
  const auto events = combined_event_detect(s);
  REQUIRE(events.size() == 1);
  CHECK(std::abs(events[0].index - 12000) <= 400);

  const auto clean = sim::gen_load_current(5.0, std::numeric_limits<double>::infinity(),
                                           10000.0, 1.5, 1);
  CHECK(combined_event_detect(clean).empty());
}

#include "gridmon/wavelet.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gridmon/errors.hpp"

namespace gridmon::wavelet {

namespace {

// 18-tap orthonormal scaling filter with nine vanishing moments, extremal
// phase. Generated by spectral factorisation of the binomial half-band
// polynomial (roots inside the unit circle), normalised to sum sqrt(2);
// verified against the orthogonality and moment identities to 1e-12.
constexpr double kDb9[18] = {
    0.03807794736387839,     0.2438346746125906,    0.6048231236901116,
    0.6572880780513011,      0.13319738582500765,   -0.2932737832791745,
    -0.0968407832229759,     0.14854074933810582,   0.030725681479332887,
    -0.06763282906133095,    0.00025094711483116336, 0.022361662123679026,
    -0.004723204757751425,   -0.004281503682463453,  0.001847646883056231,
    0.00023038576352319605,  -0.00025196318894271083, 3.9347320316271684e-05,
};

}  // namespace

FilterPair qmf_pair(std::vector<double> lowpass, std::string name) {
  if (lowpass.size() < 2 || lowpass.size() % 2 != 0)
    throw InvalidArgument("qmf_pair: lowpass length must be even and >= 2");
  double sum = 0.0;
  for (double v : lowpass) sum += v;
  if (std::abs(sum - std::numbers::sqrt2) > 1e-8)
    throw InvalidArgument("qmf_pair: lowpass must sum to sqrt(2)");
  FilterPair p;
  p.highpass.resize(lowpass.size());
  const std::size_t n = lowpass.size();
  for (std::size_t k = 0; k < n; ++k)
    p.highpass[k] = (k % 2 == 0 ? 1.0 : -1.0) * lowpass[n - 1 - k];
  p.lowpass = std::move(lowpass);
  p.name = std::move(name);
  return p;
}

FilterPair daubechies9() {
  return qmf_pair(std::vector<double>(std::begin(kDb9), std::end(kDb9)), "db9");
}

FilterPair haar() {
  const double c = 1.0 / std::numbers::sqrt2;
  return qmf_pair({c, c}, "haar");
}

void dwt_step(std::span<const double> x, const FilterPair& filt, std::vector<double>& approx,
              std::vector<double>& detail) {
  const std::size_t n = x.size();
  if (n < 2 || n % 2 != 0)
    throw InvalidArgument("dwt_step: length " + std::to_string(n) + " is not even");
  const std::size_t half = n / 2;
  const std::size_t taps = filt.lowpass.size();
  approx.assign(half, 0.0);
  detail.assign(half, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    double a = 0.0, d = 0.0;
    for (std::size_t k = 0; k < taps; ++k) {
      const double v = x[(2 * i + k) % n];
      a += filt.lowpass[k] * v;
      d += filt.highpass[k] * v;
    }
    approx[i] = a;
    detail[i] = d;
  }
}

std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> detail,
                              const FilterPair& filt) {
  if (approx.size() != detail.size() || approx.empty())
    throw InvalidArgument("idwt_step: approx/detail must be non-empty and equal length");
  const std::size_t half = approx.size();
  const std::size_t n = 2 * half;
  const std::size_t taps = filt.lowpass.size();
  std::vector<double> x(n, 0.0);
  // Transpose of the analysis operator; exact inverse because the periodic
  // analysis matrix of an orthonormal pair is orthogonal.
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t k = 0; k < taps; ++k) {
      const std::size_t m = (2 * i + k) % n;
      x[m] += filt.lowpass[k] * approx[i] + filt.highpass[k] * detail[i];
    }
  }
  return x;
}

int max_feasible_level(std::size_t n) {
  int level = 0;
  while (n >= 2 && n % 2 == 0) {
    n /= 2;
    ++level;
  }
  return level;
}

namespace {

void check_depth(std::size_t n, int levels) {
  if (levels < 1) throw InvalidArgument("decompose: levels must be >= 1");
  const int feasible = max_feasible_level(n);
  if (levels > feasible)
    throw DepthError("decompose: frame of " + std::to_string(n) + " samples supports at most " +
                         std::to_string(feasible) + " level(s), requested " +
                         std::to_string(levels),
                     feasible);
}

}  // namespace

DwtResult dwt_decompose(std::span<const double> x, const FilterPair& filt, int levels) {
  check_depth(x.size(), levels);
  DwtResult res;
  res.levels = levels;
  std::vector<double> cur(x.begin(), x.end());
  for (int j = 0; j < levels; ++j) {
    std::vector<double> a, d;
    dwt_step(cur, filt, a, d);
    res.details.push_back(std::move(d));
    cur = std::move(a);
  }
  res.approx = std::move(cur);
  return res;
}

std::vector<double> dwt_reconstruct(const DwtResult& dec, const FilterPair& filt) {
  std::vector<double> cur = dec.approx;
  for (int j = dec.levels - 1; j >= 0; --j)
    cur = idwt_step(cur, dec.details[static_cast<std::size_t>(j)], filt);
  return cur;
}

WptTree wpt_decompose(std::span<const double> x, const FilterPair& filt, int levels) {
  check_depth(x.size(), levels);
  WptTree tree;
  tree.depth = levels;
  tree.nodes.resize(static_cast<std::size_t>(levels) + 1);
  tree.nodes[0].push_back(std::vector<double>(x.begin(), x.end()));
  for (int j = 0; j < levels; ++j) {
    auto& parents = tree.nodes[static_cast<std::size_t>(j)];
    auto& children = tree.nodes[static_cast<std::size_t>(j) + 1];
    children.resize(parents.size() * 2);
    for (std::size_t m = 0; m < parents.size(); ++m) {
      std::vector<double> a, d;
      dwt_step(parents[m], filt, a, d);
      children[2 * m] = std::move(a);
      children[2 * m + 1] = std::move(d);
    }
  }
  return tree;
}

std::vector<double> wpt_reconstruct(const WptTree& tree, const FilterPair& filt) {
  if (tree.nodes.empty()) throw InvalidArgument("wpt_reconstruct: empty tree");
  auto level = tree.nodes.back();
  for (int j = tree.depth; j > 0; --j) {
    std::vector<std::vector<double>> up(level.size() / 2);
    for (std::size_t m = 0; m < up.size(); ++m)
      up[m] = idwt_step(level[2 * m], level[2 * m + 1], filt);
    level = std::move(up);
  }
  return level[0];
}

NodeEntropy wp_entropy(std::span<const double> coeffs) {
  if (coeffs.empty()) throw InvalidArgument("wp_entropy: empty node");
  double total = 0.0;
  for (double w : coeffs) total += w * w;
  NodeEntropy out;
  if (total <= 0.0) {
    out.degenerate = true;
    return out;
  }
  double h = 0.0;
  for (double w : coeffs) {
    const double p = (w * w) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  out.entropy = h;
  return out;
}

EntropyFeature wpt_entropy(const WptTree& tree) {
  EntropyFeature feat;
  feat.raw.resize(static_cast<std::size_t>(tree.depth));
  feat.normalized.resize(static_cast<std::size_t>(tree.depth));
  feat.degenerate.resize(static_cast<std::size_t>(tree.depth));
  for (int j = 1; j <= tree.depth; ++j) {
    const auto& nodes = tree.nodes[static_cast<std::size_t>(j)];
    auto& raw = feat.raw[static_cast<std::size_t>(j - 1)];
    auto& deg = feat.degenerate[static_cast<std::size_t>(j - 1)];
    double level_sum = 0.0;
    for (const auto& node : nodes) {
      const auto e = wp_entropy(node);
      raw.push_back(e.entropy);
      deg.push_back(e.degenerate ? 1 : 0);
      level_sum += e.entropy;
    }
    auto& norm = feat.normalized[static_cast<std::size_t>(j - 1)];
    norm.resize(raw.size(), 0.0);
    // A level can only be normalised when it carries entropy at all; a level
    // of pure spikes or silence is left as zeros.
    if (level_sum > 0.0)
      for (std::size_t m = 0; m < raw.size(); ++m) norm[m] = raw[m] / level_sum;
  }
  return feat;
}

EntropyMap wpt_entropy_feature_map(const SampleStream& stream, const FilterPair& filt,
                                   double fundamental_hz, std::int64_t start_index) {
  constexpr int kLevels = 3;
  constexpr std::size_t kFrames = 12;  // quarter cycles over 3 fundamental cycles
  if (stream.sample_rate_hz <= 0.0 || fundamental_hz <= 0.0)
    throw InvalidArgument("wpt_entropy_feature_map: rates must be positive");
  const double quarter_exact = stream.sample_rate_hz / (4.0 * fundamental_hz);
  const auto quarter = static_cast<std::size_t>(std::llround(quarter_exact));
  if (std::abs(quarter_exact - static_cast<double>(quarter)) > 1e-9)
    throw InvalidArgument("wpt_entropy_feature_map: quarter cycle is not a whole sample count");
  const std::size_t frame_len = quarter / 8 * 8;
  if (frame_len < 8)
    throw InvalidArgument("wpt_entropy_feature_map: sample rate too low for a 3-level split");
  const auto need = static_cast<std::size_t>(start_index) + quarter * kFrames;
  if (start_index < 0 || stream.samples.size() < need)
    throw InvalidArgument("wpt_entropy_feature_map: stream must cover 3 cycles past the start");

  EntropyMap map;
  map.rows = 2 + 4 + 8;
  map.cols = kFrames;
  map.values.assign(map.rows * map.cols, 0.0);
  map.span_begin = start_index;
  map.span_end = start_index + static_cast<std::int64_t>(quarter * kFrames);
  for (std::size_t c = 0; c < kFrames; ++c) {
    const auto begin = static_cast<std::size_t>(start_index) + c * quarter;
    const std::span<const double> frame(stream.samples.data() + begin, frame_len);
    const auto feat = wpt_entropy(wpt_decompose(frame, filt, kLevels));
    std::size_t r = 0;
    for (int j = 0; j < kLevels; ++j)
      for (double v : feat.normalized[static_cast<std::size_t>(j)]) map.values[r++ * map.cols + c] = v;
  }
  return map;
}

std::vector<double> highband_extract(std::span<const double> x, const FilterPair& filt) {
  const std::size_t n = x.size();
  if (n < 2) throw InvalidArgument("highband_extract: need at least 2 samples");
  const std::size_t out_len = (n + 1) / 2;
  const std::size_t taps = filt.highpass.size();
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < taps; ++k) d += filt.highpass[k] * x[(2 * i + k) % n];
    out[i] = d;
  }
  return out;
}

}  // namespace gridmon::wavelet

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridmon/signal.hpp"

namespace gridmon::wavelet {

// Orthonormal analysis pair. highpass[k] = (-1)^k * lowpass[len-1-k].
struct FilterPair {
  std::vector<double> lowpass;
  std::vector<double> highpass;
  std::string name;
};

FilterPair daubechies9();
FilterPair haar();

// Builds the quadrature-mirror highpass from a lowpass and validates that the
// lowpass sums to sqrt(2) and has even length.
FilterPair qmf_pair(std::vector<double> lowpass, std::string name);

// Boundary handling is periodic throughout: indices wrap modulo the node
// length, so every split halves the coefficient count exactly and the
// analysis matrix stays orthogonal for any even length, including nodes
// shorter than the filter.
void dwt_step(std::span<const double> x, const FilterPair& filt, std::vector<double>& approx,
              std::vector<double>& detail);
std::vector<double> idwt_step(std::span<const double> approx, std::span<const double> detail,
                              const FilterPair& filt);

// Deepest level such that the length stays even at every split.
int max_feasible_level(std::size_t n);

struct DwtResult {
  std::vector<std::vector<double>> details;  // details[j] produced at level j+1
  std::vector<double> approx;                // deepest approximation
  int levels = 0;
};

DwtResult dwt_decompose(std::span<const double> x, const FilterPair& filt, int levels);
std::vector<double> dwt_reconstruct(const DwtResult& dec, const FilterPair& filt);

// Full wavelet-packet tree in natural order: node m at level j splits into
// child 2m (lowpass) and 2m+1 (highpass) at level j+1. nodes[j] holds the
// 2^j coefficient vectors of level j; nodes[0] is the input.
struct WptTree {
  std::vector<std::vector<std::vector<double>>> nodes;
  int depth = 0;
};

WptTree wpt_decompose(std::span<const double> x, const FilterPair& filt, int levels);
std::vector<double> wpt_reconstruct(const WptTree& tree, const FilterPair& filt);

struct NodeEntropy {
  double entropy = 0.0;    // -sum p ln p over p = w^2 / sum w^2
  bool degenerate = false; // all-zero node; entropy reported as 0
};

NodeEntropy wp_entropy(std::span<const double> coeffs);

// Entropies for every node of every level of a tree, plus the per-level
// normalised variant (each level's entropies divided by their level sum, so a
// level with any signal sums to exactly 1).
struct EntropyFeature {
  std::vector<std::vector<double>> raw;         // [level-1][node]
  std::vector<std::vector<double>> normalized;  // same layout
  std::vector<std::vector<char>> degenerate;    // per node
};

EntropyFeature wpt_entropy(const WptTree& tree);

// Stacked normalised entropies (levels 1..3: 2+4+8 = 14 rows) over 12
// quarter-cycle frames spanning 3 fundamental cycles, row-major. Frames start
// on exact quarter-cycle boundaries; each frame is truncated to the largest
// multiple of 8 samples so a 3-level split is feasible.
struct EntropyMap {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::int64_t span_begin = 0;
  std::int64_t span_end = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

EntropyMap wpt_entropy_feature_map(const SampleStream& stream, const FilterPair& filt,
                                   double fundamental_hz = 50.0, std::int64_t start_index = 0);

// One-level detail band (upper half of the input bandwidth). Works for any
// length >= 2; output has ceil(n/2) samples at half the input rate.
std::vector<double> highband_extract(std::span<const double> x, const FilterPair& filt);

}  // namespace gridmon::wavelet

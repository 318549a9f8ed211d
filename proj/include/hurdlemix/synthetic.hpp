#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hurdlemix/model.hpp"
#include "hurdlemix/random.hpp"

namespace hurdlemix {

struct TrueInner {
  double weight = 1.0;
  std::vector<std::uint32_t> r_star;
  std::vector<double> theta_star;
};

struct TrueOuter {
  double weight = 1.0;
  std::vector<double> p_star;  // may sit on 0 or 1
  std::vector<TrueInner> inner;
};

struct GroundTruth {
  std::size_t n = 0, d = 0, T = 0;
  std::vector<TrueOuter> outer;

  // Throws invalid_argument on inconsistent dimensions or weights that do not
  // sum to 1 per level.
  void check() const;
};

struct SyntheticData {
  CountDataset data;
  std::vector<int> outer;  // true component index per subject
  std::vector<int> inner;  // index within the outer component
};

// Allocations are drawn from `rng`; counts of subject i come from the
// substream seeded by substream_seed(base, i) with one base taken from `rng`.
SyntheticData generate(const GroundTruth& truth, Rng& rng);

// "three-outer" (n = 150, d = 7, T = 7; 2/1/1 inner components),
// "single-cluster" (n = 60, d = 3, T = 5) and "nested-heavy"
// (1 outer, 4 inner; n = 200, d = 4, T = 6).
const std::map<std::string, GroundTruth>& standard_scenarios();
const GroundTruth& scenario(const std::string& name);

}  // namespace hurdlemix

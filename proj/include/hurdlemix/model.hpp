#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hurdlemix {

// Dense n x d x T tensor of non-negative counts: subject i, process j,
// replicate t. Replicates of one (i, j) cell are contiguous.
class CountDataset {
 public:
  CountDataset() = default;
  CountDataset(std::size_t n, std::size_t d, std::size_t T,
               std::vector<std::uint64_t> counts);

  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  std::size_t T() const { return T_; }

  std::uint64_t operator()(std::size_t i, std::size_t j, std::size_t t) const {
    return counts_[(i * d_ + j) * T_ + t];
  }
  // The T replicates of subject i on process j.
  std::span<const std::uint64_t> series(std::size_t i, std::size_t j) const {
    return {counts_.data() + (i * d_ + j) * T_, T_};
  }
  std::span<const std::uint64_t> values() const { return counts_; }

  bool operator==(const CountDataset&) const = default;

 private:
  std::size_t n_ = 0, d_ = 0, T_ = 0;
  std::vector<std::uint64_t> counts_;
};

// indicator(i, j, t) = 1 iff counts(i, j, t) > 0.
struct ZeroIndicators {
  std::size_t n = 0, d = 0, T = 0;
  std::vector<std::uint8_t> indicators;

  std::uint8_t operator()(std::size_t i, std::size_t j, std::size_t t) const {
    return indicators[(i * d + j) * T + t];
  }
};

ZeroIndicators compute_zero_indicators(const CountDataset& data);

struct HurdleParams {
  double p = 0.5;
  std::uint64_t r = 1;
  double theta = 0.5;
};

// psi*_ms for one (outer, inner) pair, one entry per process.
struct ComponentParams {
  std::vector<double> p_star;
  std::vector<std::uint32_t> r_star;
  std::vector<double> theta_star;
};

// log[(y + r - 2)! / ((r - 1)! (y - 1)!)] for y, r >= 1. Small arguments come
// from a precomputed table, the rest from lgamma.
double log_nb_coefficient(std::uint64_t y, std::uint64_t r);

// Shifted Negative Binomial on {1, 2, ...}:
//   g(y | r, theta) = C(y + r - 2, y - 1) theta^(y - 1) (1 - theta)^r.
double log_shifted_nb_pmf(std::uint64_t y, std::uint64_t r, double theta);

// log(1 - p) at zero, log p + log g(y | r, theta) otherwise.
double log_hurdle_pmf(std::uint64_t y, const HurdleParams& params);

// Sum over processes and replicates of log_hurdle_pmf for subject i.
double subject_component_loglik(const CountDataset& data, std::size_t i,
                                const ComponentParams& comp);

// Per (subject, process) sufficient statistics across replicates.
struct CellStats {
  std::uint32_t positives = 0;  // number of replicates with y > 0
  std::uint32_t zeros = 0;
  std::uint64_t excess = 0;  // sum of (y - 1) over positive replicates
};

// Read-only view of the data both samplers work from: cell statistics plus
// the positive counts of each (subject, process), gathered once.
class DatasetSummary {
 public:
  explicit DatasetSummary(const CountDataset& data);

  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  std::size_t T() const { return T_; }

  const CellStats& cell(std::size_t i, std::size_t j) const {
    return cells_[i * d_ + j];
  }
  std::span<const std::uint64_t> positives(std::size_t i, std::size_t j) const {
    const std::size_t k = i * d_ + j;
    return {positive_values_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
  }
  const CountDataset& data() const { return *data_; }

 private:
  const CountDataset* data_;
  std::size_t n_, d_, T_;
  std::vector<CellStats> cells_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint64_t> positive_values_;
};

}  // namespace hurdlemix

#include "hurdlemix/model.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hurdlemix {

namespace {

constexpr std::size_t kTableSize = 256;

struct CoefficientTable {
  // values[y * kTableSize + r] for 1 <= y, r < kTableSize
  std::vector<double> values;

  CoefficientTable() : values(kTableSize * kTableSize, 0.0) {
    for (std::size_t y = 1; y < kTableSize; ++y) {
      for (std::size_t r = 1; r < kTableSize; ++r) {
        values[y * kTableSize + r] =
            std::lgamma(double(y + r - 1)) - std::lgamma(double(r)) -
            std::lgamma(double(y));
      }
    }
  }
};

const CoefficientTable& coefficient_table() {
  static const CoefficientTable table;
  return table;
}

void check_probability(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) {
    throw std::domain_error(std::string(name) + " must lie in (0, 1), got " +
                            std::to_string(v));
  }
}

}  // namespace

CountDataset::CountDataset(std::size_t n, std::size_t d, std::size_t T,
                           std::vector<std::uint64_t> counts)
    : n_(n), d_(d), T_(T), counts_(std::move(counts)) {
  if (n == 0 || d == 0 || T == 0) {
    throw std::invalid_argument("dataset dimensions must be positive");
  }
  if (counts_.size() != n * d * T) {
    throw std::invalid_argument("dataset has " + std::to_string(counts_.size()) +
                                " counts, expected n*d*T = " +
                                std::to_string(n * d * T));
  }
}

ZeroIndicators compute_zero_indicators(const CountDataset& data) {
  ZeroIndicators out{data.n(), data.d(), data.T(), {}};
  out.indicators.reserve(data.values().size());
  for (std::uint64_t y : data.values()) out.indicators.push_back(y > 0 ? 1 : 0);
  return out;
}

double log_nb_coefficient(std::uint64_t y, std::uint64_t r) {
  if (y < kTableSize && r < kTableSize) {
    return coefficient_table().values[y * kTableSize + r];
  }
  return std::lgamma(double(y + r - 1)) - std::lgamma(double(r)) -
         std::lgamma(double(y));
}

double log_shifted_nb_pmf(std::uint64_t y, std::uint64_t r, double theta) {
  if (y < 1) throw std::domain_error("shifted NB support starts at y = 1");
  if (r < 1) throw std::domain_error("shifted NB requires r >= 1");
  check_probability(theta, "theta");
  return log_nb_coefficient(y, r) + double(y - 1) * std::log(theta) +
         double(r) * std::log1p(-theta);
}

double log_hurdle_pmf(std::uint64_t y, const HurdleParams& params) {
  check_probability(params.p, "p");
  if (y == 0) return std::log1p(-params.p);
  return std::log(params.p) + log_shifted_nb_pmf(y, params.r, params.theta);
}

double subject_component_loglik(const CountDataset& data, std::size_t i,
                                const ComponentParams& comp) {
  if (i >= data.n()) throw std::out_of_range("subject index out of range");
  if (comp.p_star.size() != data.d() || comp.r_star.size() != data.d() ||
      comp.theta_star.size() != data.d()) {
    throw std::invalid_argument("component dimension does not match dataset");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < data.d(); ++j) {
    const HurdleParams hp{comp.p_star[j], comp.r_star[j], comp.theta_star[j]};
    for (std::uint64_t y : data.series(i, j)) total += log_hurdle_pmf(y, hp);
  }
  return total;
}

DatasetSummary::DatasetSummary(const CountDataset& data)
    : data_(&data), n_(data.n()), d_(data.d()), T_(data.T()) {
  cells_.resize(n_ * d_);
  offsets_.assign(n_ * d_ + 1, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      const std::size_t k = i * d_ + j;
      CellStats& cs = cells_[k];
      for (std::uint64_t y : data.series(i, j)) {
        if (y > 0) {
          ++cs.positives;
          cs.excess += y - 1;
          positive_values_.push_back(y);
        } else {
          ++cs.zeros;
        }
      }
      offsets_[k + 1] = positive_values_.size();
    }
  }
}

}  // namespace hurdlemix

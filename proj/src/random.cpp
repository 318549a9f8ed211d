#include "hurdlemix/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hurdlemix/errors.hpp"

namespace hurdlemix {

double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double draw_gamma(Rng& rng, double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  const double x = dist(rng);
  return std::max(x, std::numeric_limits<double>::min());
}

double draw_beta(Rng& rng, double a, double b) {
  const double x = draw_gamma(rng, a, 1.0);
  const double y = draw_gamma(rng, b, 1.0);
  double v = x / (x + y);
  if (!(v > 0.0)) v = std::numeric_limits<double>::min();
  if (!(v < 1.0)) v = std::nextafter(1.0, 0.0);
  return v;
}

std::uint32_t draw_geometric(Rng& rng, double zeta) {
  std::geometric_distribution<std::uint32_t> dist(zeta);
  return dist(rng) + 1;
}

std::uint32_t draw_shifted_poisson(Rng& rng, double lambda) {
  std::poisson_distribution<std::uint32_t> dist(lambda);
  return dist(rng) + 1;
}

double log_sum_exp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::size_t draw_log_categorical(Rng& rng, std::span<const double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) mx = std::max(mx, v);
  if (!std::isfinite(mx)) {
    throw NumericError("categorical draw: every cell has zero or undefined mass");
  }
  double total = 0.0;
  for (double v : log_weights) total += std::exp(v - mx);
  double target = draw_uniform(rng) * total;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double w = std::exp(log_weights[k] - mx);
    if (w > 0.0) last_positive = k;
    if (target < w) return k;
    target -= w;
  }
  return last_positive;
}

std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over (base, index)
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hurdlemix

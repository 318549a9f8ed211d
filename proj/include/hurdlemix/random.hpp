#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace hurdlemix {

using Rng = std::mt19937_64;

double draw_uniform(Rng& rng);

// Gamma with the given shape and *rate*. Never returns 0.
double draw_gamma(Rng& rng, double shape, double rate);

// Beta(a, b) through two Gamma draws, clamped into the open interval (0, 1).
double draw_beta(Rng& rng, double a, double b);

// Geometric on {1, 2, ...}: P(k) = zeta (1 - zeta)^(k - 1).
std::uint32_t draw_geometric(Rng& rng, double zeta);

// Shifted Poisson on {1, 2, ...}: X - 1 ~ Poisson(lambda).
std::uint32_t draw_shifted_poisson(Rng& rng, double lambda);

// Index drawn proportionally to exp(log_weights). Entries may be -inf.
// Throws NumericError when no entry is finite.
std::size_t draw_log_categorical(Rng& rng, std::span<const double> log_weights);

// log(sum(exp(x))) with max subtraction; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);

// Derives an independent seed for stream `index` from a base seed.
std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index);

}  // namespace hurdlemix

#pragma once

#include <cstdint>
#include <functional>

#include "hurdlemix/random.hpp"

namespace hurdlemix {

// Unnormalised log density on u > 0 of the latent variable attached to a
// Norm-IFPP level with shifted-Poisson(Lambda) dimension and Gamma(gamma, 1)
// weights, given n subjects in K clusters:
//   (Lambda psi(u) + K) exp(Lambda psi(u)) u^(n-1) / (u + 1)^(n + K gamma),
// with psi(u) = (u + 1)^(-gamma).
double log_latent_density(double u, double Lambda, double gamma, std::uint64_t n,
                          std::uint64_t K);

// Exact draw for n = 1, K = 1. Under w = (u + 1)^(-gamma) the density becomes
// (1 + Lambda w) exp(Lambda w) on (0, 1), whose CDF w exp(Lambda (w - 1)) is
// inverted with the Lambert W function.
double draw_singleton_latent(double Lambda, double gamma, Rng& rng);

// One stepping-out slice update of a positive variable, performed on log u.
// Throws NumericError when the bracket or the shrinkage loop exceeds its cap.
double slice_sample_positive(double current,
                             const std::function<double(double)>& log_density,
                             Rng& rng, double width = 1.0);

}  // namespace hurdlemix

#pragma once

#include <optional>
#include <span>
#include <vector>

namespace hurdlemix {

// Sample autocorrelations rho_0..rho_{max_lag} (biased estimator, FFT based).
// Empty when the series has zero variance.
std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

// Integrated autocorrelation time 1 + 2 sum_k rho_k, truncated by Geyer's
// initial positive sequence rule, floored at 1 / log10(N). nullopt for a
// constant series. Needs N >= 10 and finite values (invalid_argument).
std::optional<double> iat(std::span<const double> x);

// N / IAT.
std::optional<double> ess(std::span<const double> x);

}  // namespace hurdlemix

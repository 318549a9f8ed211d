#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hurdlemix/model.hpp"
#include "hurdlemix/random.hpp"

namespace hurdlemix {

// Fixed prior parameters of the enriched mixture.
//   p*_mj ~ Beta(alpha, beta)          r*_msj ~ Geometric(zeta) on {1, 2, ...}
//   theta*_msj ~ Beta(eta, lambda)     Gamma_m ~ Gamma(gamma_M, 1)
//   Delta_ms ~ Gamma(gamma_S, 1)       M ~ Poi_0(Lambda_M), S_m ~ Poi_0(Lambda_S)
struct Hyperparams {
  double alpha = 1.0;
  double beta = 1.0;
  double zeta = 0.5;
  double eta = 1.0;
  double lambda = 1.0;
  double gamma_M = 1.0;
  double gamma_S = 1.0;
  double Lambda_M = 3.0;
  double Lambda_S = 3.0;

  bool operator==(const Hyperparams&) const = default;
};

struct ValidationReport {
  std::vector<std::string> violations;  // one entry per offending field

  bool ok() const { return violations.empty(); }
  std::string message() const;
};

ValidationReport validate(const Hyperparams& h);

// Poi_0(Lambda) at k >= 1, i.e. the Poisson(Lambda) mass at k - 1.
double log_shifted_poisson_pmf(std::uint64_t k, double Lambda);

ComponentParams sample_component_from_prior(const Hyperparams& h, std::size_t d,
                                            Rng& rng);

// Gamma(gamma, 1) draw for an unnormalised mixture weight.
double sample_weight_from_prior(double gamma, Rng& rng);

}  // namespace hurdlemix

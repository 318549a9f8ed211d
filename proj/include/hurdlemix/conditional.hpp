#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hurdlemix/chain.hpp"
#include "hurdlemix/model.hpp"
#include "hurdlemix/priors.hpp"
#include "hurdlemix/random.hpp"
#include "hurdlemix/trace.hpp"

namespace hurdlemix {

struct InnerComponent {
  double delta = 1.0;  // unnormalised weight Delta_ms
  std::vector<std::uint32_t> r_star;
  std::vector<double> theta_star;
};

struct OuterComponent {
  double gamma_w = 1.0;  // unnormalised weight Gamma_m
  std::vector<double> p_star;
  std::vector<InnerComponent> inner;  // S_m = inner.size() >= 1
  double u_m = 1.0;
};

// Full state of the conditional sampler. Labels are 0-based: c[i] indexes
// components, z[i] indexes components[c[i]].inner. After relabel() the
// allocated outer components occupy 0..K-1 and, inside each of them, the
// allocated inner components occupy 0..K_m-1.
struct ConditionalState {
  std::vector<OuterComponent> components;
  std::vector<int> c;
  std::vector<int> z;
  double u_bar = 1.0;

  std::size_t M() const { return components.size(); }
  std::size_t n() const { return c.size(); }
  // Number of distinct outer labels in c.
  std::size_t allocated_outer() const;
  // Number of distinct inner labels among subjects with c[i] == m.
  std::size_t allocated_inner(std::size_t m) const;
  std::vector<std::size_t> outer_sizes() const;
  std::vector<std::size_t> inner_sizes(std::size_t m) const;
};

// Over-dispersed valid start: a uniform random partition into
// min(n, ceil(Lambda_M) + 1) groups, z = 0, parameters from the priors.
// A non-empty `fixed_outer` is used as the outer partition instead.
ConditionalState initial_conditional_state(const DatasetSummary& data,
                                           const Hyperparams& h, Rng& rng,
                                           const std::vector<int>& fixed_outer = {});

// Joint draw of (c_i, z_i) for every subject from
//   P[c_i = m, z_i = s] ∝ Gamma_m (Delta_ms / sum_s' Delta_ms') prod_jt f(y_ijt | psi*_ms).
// With keep_outer = true, c is held fixed and only z is drawn.
void sample_allocations(ConditionalState& state, const DatasetSummary& data,
                        Rng& rng, bool keep_outer = false);

// Moves allocated components to the front, preserving relative order, and
// re-indexes c and z.
void relabel(ConditionalState& state);

// Gamma(n, sum_m Gamma_m).
double sample_u_bar(const ConditionalState& state, Rng& rng);

// K + x with q_x ∝ (x + K)!/x! psi^x Poi_0(K + x; Lambda).
std::uint64_t sample_num_components(std::uint64_t K, double psi, double Lambda,
                                    Rng& rng);

// Normalised q_x over x = 0..X as used by sample_num_components.
std::vector<double> num_components_pmf(std::uint64_t K, double psi, double Lambda);

// Redraws every Gamma_m from Gamma(gamma_M + n_m, 1 + u_bar); n_m = 0 for
// unallocated components.
void sample_outer_weights(ConditionalState& state, double u_bar,
                          const Hyperparams& h, Rng& rng);

void update_p_star(ConditionalState& state, const DatasetSummary& data,
                   const Hyperparams& h, Rng& rng, std::size_t m);
void update_theta_star(ConditionalState& state, const DatasetSummary& data,
                       const Hyperparams& h, Rng& rng, std::size_t m, std::size_t s);
void update_r_star(ConditionalState& state, const DatasetSummary& data,
                   const Hyperparams& h, Rng& rng, std::size_t m, std::size_t s);

// Normalised full conditional of r over 1..R, with
//   log w(r) = (r - 1) log(1 - zeta) + r N+ log(1 - theta) + sum log C(y + r - 2, y - 1)
// and R extended until the tail mass is below 1e-10 of the total.
std::vector<double> r_full_conditional(std::span<const std::uint64_t> positives,
                                       double theta, double zeta);

// Delta_ms ~ Gamma(gamma_S + n_ms, 1 + u_m) for every inner component of comp;
// sizes[s] is n_ms (missing entries count as 0).
void sample_inner_weights(OuterComponent& comp, std::span<const std::size_t> sizes,
                          const Hyperparams& h, Rng& rng);

// u_m, S_m, the inner weights and the inner (r*, theta*) for outer component m.
void update_inner_block(ConditionalState& state, const DatasetSummary& data,
                        const Hyperparams& h, Rng& rng, std::size_t m);

// Redraws every component past the allocated ones from the prior.
// Drops trailing unallocated components or appends empty ones (filled later
// by update_unallocated_outer) so that M() == M.
void resize_outer(ConditionalState& state, std::size_t M);

void update_unallocated_outer(ConditionalState& state, const Hyperparams& h,
                              Rng& rng, std::size_t d);

void sweep(ConditionalState& state, const DatasetSummary& data,
           const Hyperparams& h, Rng& rng, bool fixed_outer = false);

// Sum over subjects of the log-likelihood at their allocated parameters.
double conditional_loglik(const ConditionalState& state, const DatasetSummary& data);

TraceRecord make_conditional_record(const ConditionalState& state,
                                    const DatasetSummary& data,
                                    const Hyperparams& h, std::uint64_t iteration);

ChainTrace run_conditional_chain(const CountDataset& data, const Hyperparams& h,
                                 const ChainConfig& config,
                                 const RunControl& control = {});

}  // namespace hurdlemix

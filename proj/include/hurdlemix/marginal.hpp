#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hurdlemix/chain.hpp"
#include "hurdlemix/model.hpp"
#include "hurdlemix/priors.hpp"
#include "hurdlemix/random.hpp"
#include "hurdlemix/trace.hpp"

namespace hurdlemix {

// How the infinite r-sum in M_NB is evaluated.
struct MnbMode {
  enum class Kind { truncated, monte_carlo };
  Kind kind = Kind::truncated;
  std::size_t nsamples = 100;

  static MnbMode truncated() { return {}; }
  static MnbMode monte_carlo(std::size_t n = 100) { return {Kind::monte_carlo, n}; }
  bool operator==(const MnbMode&) const = default;
};

// log B(alpha + n1, beta + n0) - log B(alpha, beta).
double log_marg_bern(std::uint64_t n1, std::uint64_t n0, double alpha, double beta);

// Multiset of positive counts, stored as sorted (value, multiplicity) pairs.
class PositiveMultiset {
 public:
  void add(std::uint64_t y);
  void remove(std::uint64_t y);
  void add(std::span<const std::uint64_t> ys) { for (auto y : ys) add(y); }
  void remove(std::span<const std::uint64_t> ys) { for (auto y : ys) remove(y); }

  std::uint64_t size() const { return size_; }
  std::uint64_t excess() const { return excess_; }  // sum of (y - 1)
  const std::vector<std::pair<std::uint64_t, std::uint64_t>>& entries() const {
    return entries_;
  }
  bool operator==(const PositiveMultiset&) const = default;

 private:
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries_;
  std::uint64_t size_ = 0;
  std::uint64_t excess_ = 0;
};

// log M_NB of the union of `base` and `extra`:
//   sum_{r >= 1} B(eta + sum(y - 1), lambda + r N) / B(eta, lambda)
//               * prod_y C(y + r - 2, y - 1) * (1 - zeta)^(r - 1) zeta.
// Truncated mode sums until the tail is below 1e-10 of the running total
// (cap 1e5 terms, NumericError past it). Monte Carlo mode averages the
// r-dependent factor over `nsamples` Geometric(zeta) draws of r and needs rng.
double log_marg_nb(const PositiveMultiset& base, std::span<const std::uint64_t> extra,
                   double eta, double lambda, double zeta, const MnbMode& mode,
                   Rng* rng = nullptr);

double log_marg_nb(std::span<const std::uint64_t> positives, double eta, double lambda,
                   double zeta, const MnbMode& mode = {}, Rng* rng = nullptr);

// Sufficient statistics of the nested partition. Outer cluster m carries per
// process the number of positive and zero cells; inner cluster (m, s) carries
// per process the multiset of positive counts.
struct InnerClusterStats {
  std::size_t size = 0;
  std::vector<PositiveMultiset> positives;
  bool operator==(const InnerClusterStats&) const = default;
};

struct OuterClusterStats {
  std::size_t size = 0;
  std::vector<std::uint64_t> n1;
  std::vector<std::uint64_t> n0;
  std::vector<InnerClusterStats> inner;
  bool operator==(const OuterClusterStats&) const = default;
};

struct ClusterSuffStats {
  std::vector<OuterClusterStats> clusters;

  static ClusterSuffStats build(const DatasetSummary& data, std::span<const int> c,
                                std::span<const int> z);
  void add_subject(const DatasetSummary& data, std::size_t i, std::size_t m,
                   std::size_t s);
  void remove_subject(const DatasetSummary& data, std::size_t i, std::size_t m,
                      std::size_t s);
  bool operator==(const ClusterSuffStats&) const = default;
};

// log M(y | c, z) = sum_j sum_m [log M_Bern + sum_s log M_NB].
double log_marginal_likelihood(const DatasetSummary& data, const Hyperparams& h,
                               std::span<const int> c, std::span<const int> z,
                               const MnbMode& mode = {}, Rng* rng = nullptr);

// Allocation-only state. Labels are 0-based and contiguous; u[m] is the latent
// of outer cluster m.
struct MarginalState {
  std::vector<int> c;
  std::vector<int> z;
  double u_bar = 1.0;
  std::vector<double> u;

  std::size_t K() const { return u.size(); }
};

// Log weights of the full conditional of subject i, with i removed from both
// levels. outer[m] for m < K is an existing cluster (z_i summed out) and
// outer[K] the new cluster; inner[m][s] for s < K_m is an existing inner
// cluster of m and inner[m][K_m] a new one.
struct AllocationTable {
  std::vector<double> outer;
  std::vector<std::vector<double>> inner;
};

// lgamma(lambda + x) and lgamma(eta + lambda + x) over integer x, filled on
// demand.
struct LgammaTable {
  double lambda = 1.0, eta_lambda = 2.0;
  mutable std::vector<double> a, b;

  double lg_lambda(std::uint64_t x) const { return lookup(a, lambda, x); }
  double lg_eta_lambda(std::uint64_t x) const { return lookup(b, eta_lambda, x); }

 private:
  static double lookup(std::vector<double>& table, double offset, std::uint64_t x);
};

class MarginalSampler {
 public:
  MarginalSampler(const DatasetSummary& data, const Hyperparams& h, MnbMode mode,
                  MarginalState state, Rng& rng);

  // Removes subject i from the statistics, deleting clusters it leaves empty
  // (the last cluster takes the freed label).
  void detach(std::size_t i);
  // With keep_outer an emptied outer cluster keeps its label (fixed outer mode).
  void detach(std::size_t i, bool keep_outer);
  // Table for a detached subject i under the current latents.
  AllocationTable allocation_table(std::size_t i) const;
  // Draws c_i for a detached subject. A new outer cluster receives i at inner
  // label 0 and a fresh U drawn exactly from its full conditional; i is then
  // attached. Otherwise only c_i is set and i stays detached.
  void sample_c_i(std::size_t i, Rng& rng);
  // Draws z_i for a detached subject whose c_i is set, then attaches it. A new
  // inner cluster triggers a refresh of U_{c_i}.
  void sample_z_i(std::size_t i, Rng& rng);
  // Slice updates of U-bar and U_1..U_K.
  void sample_latents(Rng& rng);
  void resample_u(std::size_t m, Rng& rng);

  void sweep(Rng& rng, bool fixed_outer = false);

  double log_marginal() const;
  const MarginalState& state() const { return state_; }
  const ClusterSuffStats& stats() const { return stats_; }
  bool attached(std::size_t i) const { return attached_[i]; }

 private:
  double outer_bern(std::size_t m, std::size_t j) const;
  double inner_nb(std::size_t m, std::size_t s, std::size_t j) const;
  double nb_with(std::size_t m, std::size_t s, std::size_t j, std::size_t i) const;
  void refresh_outer_cache(std::size_t m);
  void refresh_inner_cache(std::size_t m, std::size_t s);
  void attach(std::size_t i, std::size_t m, std::size_t s);
  std::vector<double> inner_table(std::size_t i, std::size_t m) const;

  struct Pending {
    std::size_t subject;
    std::size_t outer;
    std::vector<double> inner;
  };

  const DatasetSummary& data_;
  Hyperparams h_;
  MnbMode mode_;
  MarginalState state_;
  ClusterSuffStats stats_;
  std::vector<bool> attached_;
  struct NbEntry {
    double value = 0.0;
    // sum over the cluster's positives of log C(y + r - 2, y - 1), by r - 1
    mutable std::vector<double> coef;
  };
  // cached log M_Bern per (m, j) and log M_NB per (m, s, j)
  std::vector<std::vector<double>> bern_cache_;
  std::vector<std::vector<std::vector<NbEntry>>> nb_cache_;
  // log M_Bern and log M_NB of each subject on its own, per (i, j)
  std::vector<double> single_bern_;
  std::vector<double> single_nb_;
  mutable std::vector<std::vector<double>> single_coef_;
  LgammaTable lgamma_;
  Rng* mc_rng_;
  std::optional<Pending> pending_;
};

// Uniform random partition into min(n, ceil(Lambda_M) + 1) groups, z = 0,
// latents at 1.
MarginalState initial_marginal_state(std::size_t n, const Hyperparams& h, Rng& rng,
                                     const std::vector<int>& fixed_outer = {});

TraceRecord make_marginal_record(const MarginalSampler& sampler,
                                 std::uint64_t iteration);

ChainTrace run_marginal_chain(const CountDataset& data, const Hyperparams& h,
                              const ChainConfig& config, const MnbMode& mode = {},
                              const RunControl& control = {});

}  // namespace hurdlemix

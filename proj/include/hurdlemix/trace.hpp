#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hurdlemix {

enum class Algorithm { conditional, marginal };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct InnerDraw {
  double weight = 0.0;  // normalised within the outer component
  std::vector<std::uint32_t> r_star;
  std::vector<double> theta_star;

  bool operator==(const InnerDraw&) const = default;
};

struct OuterDraw {
  std::vector<double> p_star;
  std::vector<InnerDraw> inner;  // all S_m components, allocated ones first

  bool operator==(const OuterDraw&) const = default;
};

// One kept iteration. Labels in c and z are 0-based and contiguous.
// M, S and components are only filled by the conditional sampler.
struct TraceRecord {
  std::uint64_t iteration = 0;
  std::size_t M = 0;
  std::size_t K = 0;
  std::vector<std::size_t> S;
  std::vector<std::size_t> K_inner;
  std::vector<int> c;
  std::vector<int> z;
  double loglik = 0.0;        // log p(y | c, z, parameters); conditional only
  double log_marginal = 0.0;  // log M(y | c, z)
  double u_bar = 0.0;
  std::vector<double> u;
  std::vector<OuterDraw> components;  // allocated outer components only

  std::size_t total_inner() const;
  bool operator==(const TraceRecord&) const = default;
};

struct ChainTrace {
  Algorithm algorithm = Algorithm::conditional;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<TraceRecord> records;
};

// Iteration `it` (1-based) is kept when it is past burn-in and on the thinning
// grid; the number of kept iterations is (iters - burnin) / thin.
struct ChainConfig {
  std::uint64_t iters = 1000;
  std::uint64_t burnin = 0;
  std::uint64_t thin = 1;
  std::uint64_t seed = 1;
  std::vector<int> fixed_outer;  // empty: outer allocation is sampled

  bool keeps(std::uint64_t it) const {
    return it > burnin && (it - burnin) % thin == 0;
  }
  void check() const;
};

}  // namespace hurdlemix

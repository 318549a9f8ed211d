#include "hurdlemix/trace.hpp"

#include <numeric>
#include <stdexcept>

namespace hurdlemix {

std::string to_string(Algorithm a) {
  return a == Algorithm::conditional ? "conditional" : "marginal";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "conditional") return Algorithm::conditional;
  if (s == "marginal") return Algorithm::marginal;
  throw std::invalid_argument("unknown algorithm '" + s + "' (conditional|marginal)");
}

std::size_t TraceRecord::total_inner() const {
  return std::accumulate(K_inner.begin(), K_inner.end(), std::size_t{0});
}

void ChainConfig::check() const {
  if (thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (iters <= burnin) throw std::invalid_argument("iters must exceed burnin");
}

}  // namespace hurdlemix

#include "hurdlemix/priors.hpp"

#include <cmath>
#include <stdexcept>

namespace hurdlemix {

std::string ValidationReport::message() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v;
  }
  return out;
}

ValidationReport validate(const Hyperparams& h) {
  ValidationReport report;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      report.violations.push_back(std::string(name) + " must be > 0 (got " +
                                  std::to_string(v) + ")");
    }
  };
  positive(h.alpha, "alpha");
  positive(h.beta, "beta");
  if (!(h.zeta > 0.0 && h.zeta < 1.0)) {
    report.violations.push_back("zeta must lie in (0, 1) (got " +
                                std::to_string(h.zeta) + ")");
  }
  positive(h.eta, "eta");
  positive(h.lambda, "lambda");
  positive(h.gamma_M, "gamma_M");
  positive(h.gamma_S, "gamma_S");
  positive(h.Lambda_M, "Lambda_M");
  positive(h.Lambda_S, "Lambda_S");
  return report;
}

double log_shifted_poisson_pmf(std::uint64_t k, double Lambda) {
  if (k < 1) throw std::domain_error("shifted Poisson support starts at k = 1");
  const double x = double(k - 1);
  return x * std::log(Lambda) - Lambda - std::lgamma(x + 1.0);
}

ComponentParams sample_component_from_prior(const Hyperparams& h, std::size_t d,
                                            Rng& rng) {
  ComponentParams comp;
  comp.p_star.resize(d);
  comp.r_star.resize(d);
  comp.theta_star.resize(d);
  for (std::size_t j = 0; j < d; ++j) comp.p_star[j] = draw_beta(rng, h.alpha, h.beta);
  for (std::size_t j = 0; j < d; ++j) comp.r_star[j] = draw_geometric(rng, h.zeta);
  for (std::size_t j = 0; j < d; ++j) {
    comp.theta_star[j] = draw_beta(rng, h.eta, h.lambda);
  }
  return comp;
}

double sample_weight_from_prior(double gamma, Rng& rng) {
  return draw_gamma(rng, gamma, 1.0);
}

}  // namespace hurdlemix

#include "hurdlemix/latent.hpp"

#include <boost/math/special_functions/lambert_w.hpp>
#include <cmath>
#include <limits>

#include "hurdlemix/errors.hpp"

namespace hurdlemix {

double log_latent_density(double u, double Lambda, double gamma, std::uint64_t n,
                          std::uint64_t K) {
  if (!(u > 0.0) || !std::isfinite(u)) return -std::numeric_limits<double>::infinity();
  const double log1pu = std::log1p(u);
  const double psi = std::exp(-gamma * log1pu);
  return std::log(Lambda * psi + double(K)) + Lambda * psi +
         double(n - 1) * std::log(u) - (double(n) + double(K) * gamma) * log1pu;
}

double draw_singleton_latent(double Lambda, double gamma, Rng& rng) {
  double U = draw_uniform(rng);
  while (!(U > 0.0)) U = draw_uniform(rng);
  // Lambda w exp(Lambda w) = Lambda U exp(Lambda)
  const double arg = Lambda * U * std::exp(Lambda);
  const double w = boost::math::lambert_w0(arg) / Lambda;
  const double u = std::pow(w, -1.0 / gamma) - 1.0;
  return std::max(u, std::numeric_limits<double>::min());
}

double slice_sample_positive(double current,
                             const std::function<double(double)>& log_density,
                             Rng& rng, double width) {
  constexpr int kStepCap = 1000;
  constexpr int kShrinkCap = 10000;
  auto f = [&](double x) { return log_density(std::exp(x)) + x; };
  const double x0 = std::log(current);
  const double fx0 = f(x0);
  if (!std::isfinite(fx0)) throw NumericError("slice sampler: current point has zero density");
  const double level = fx0 + std::log(draw_uniform(rng));
  double left = x0 - width * draw_uniform(rng);
  double right = left + width;
  int steps = 0;
  while (f(left) > level) {
    left -= width;
    if (++steps > kStepCap) throw NumericError("slice sampler: stepping-out cap exceeded");
  }
  steps = 0;
  while (f(right) > level) {
    right += width;
    if (++steps > kStepCap) throw NumericError("slice sampler: stepping-out cap exceeded");
  }
  for (int k = 0; k < kShrinkCap; ++k) {
    const double x1 = left + draw_uniform(rng) * (right - left);
    if (f(x1) > level) return std::exp(x1);
    if (x1 < x0) {
      left = x1;
    } else {
      right = x1;
    }
  }
  throw NumericError("slice sampler: shrinkage cap exceeded");
}

}  // namespace hurdlemix

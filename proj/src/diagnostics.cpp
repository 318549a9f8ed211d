#include "hurdlemix/diagnostics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>

namespace hurdlemix {

namespace {

std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

void check_series(std::span<const double> x) {
  if (x.size() < 10) throw std::invalid_argument("diagnostics need at least 10 values");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("series contains a non-finite value");
  }
}

}  // namespace

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const std::size_t N = x.size();
  if (N == 0) return {};
  max_lag = std::min(max_lag, N - 1);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(N);

  std::size_t L = 1;
  while (L < 2 * N) L <<= 1;
  double* buf = fftw_alloc_real(L);
  fftw_complex* freq = fftw_alloc_complex(L / 2 + 1);
  fftw_plan fwd, bwd;
  {
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(int(L), buf, freq, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(int(L), freq, buf, FFTW_ESTIMATE);
  }
  std::fill(buf, buf + L, 0.0);
  for (std::size_t t = 0; t < N; ++t) buf[t] = x[t] - mean;
  fftw_execute(fwd);
  for (std::size_t k = 0; k < L / 2 + 1; ++k) {
    freq[k][0] = freq[k][0] * freq[k][0] + freq[k][1] * freq[k][1];
    freq[k][1] = 0.0;
  }
  fftw_execute(bwd);
  std::vector<double> rho;
  const double c0 = buf[0];
  if (c0 > 0.0 && c0 > 1e-300 * double(L)) {
    rho.resize(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k) rho[k] = buf[k] / c0;
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(buf);
  fftw_free(freq);
  return rho;
}

std::optional<double> iat(std::span<const double> x) {
  check_series(x);
  const std::size_t N = x.size();
  double lo = x[0], hi = x[0];
  for (double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) return std::nullopt;
  const auto rho = autocorrelation(x, N - 1);
  if (rho.empty()) return std::nullopt;
  double sum = 0.0;
  for (std::size_t k = 0; 2 * k + 1 < rho.size(); ++k) {
    const double pair = rho[2 * k] + rho[2 * k + 1];
    if (k > 0 && pair <= 0.0) break;
    sum += pair;
  }
  const double floor = 1.0 / std::log10(double(N));
  return std::max(floor, 2.0 * sum - 1.0);
}

std::optional<double> ess(std::span<const double> x) {
  const auto tau = iat(x);
  if (!tau) return std::nullopt;
  return double(x.size()) / *tau;
}

}  // namespace hurdlemix

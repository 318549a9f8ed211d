#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hurdlemix/priors.hpp"
#include "hurdlemix/random.hpp"

using namespace hurdlemix;

namespace {

struct Moments {
  double mean = 0, var = 0;
};

template <class F>
Moments moments(std::size_t n, F&& draw) {
  double s = 0, s2 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double v = draw();
    s += v;
    s2 += v * v;
  }
  const double m = s / double(n);
  return {m, s2 / double(n) - m * m};
}

// |x - mu| within 4 standard errors of the mean of n draws with variance var
bool near_mean(double x, double mu, double var, std::size_t n) {
  return std::abs(x - mu) <= 4.0 * std::sqrt(var / double(n));
}

}  // namespace

TEST_CASE("validate") {
  Hyperparams h;
  CHECK(validate(h).ok());
  h.alpha = 0;
  auto r = validate(h);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].find("alpha") != std::string::npos);
  h = {};
  h.zeta = 1.0;
  r = validate(h);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].find("zeta") != std::string::npos);
  h = {};
  h.beta = -1;
  h.Lambda_S = 0;
  CHECK(validate(h).violations.size() == 2);
}

TEST_CASE("shifted Poisson pmf") {
  CHECK(log_shifted_poisson_pmf(1, 1.7) == doctest::Approx(-1.7));
  CHECK(std::exp(log_shifted_poisson_pmf(3, 2.0)) == doctest::Approx(0.27067).epsilon(1e-5));
  double s = 0;
  for (std::uint64_t k = 1; k < 200; ++k) s += std::exp(log_shifted_poisson_pmf(k, 6.5));
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(log_shifted_poisson_pmf(0, 1.0), std::domain_error);
}

TEST_CASE("component prior draws") {
  const std::size_t N = 100000;
  Hyperparams h;
  h.alpha = 2;
  h.beta = 3;
  h.zeta = 0.25;
  Rng rng(1);
  double sp = 0, sr = 0, st = 0;
  for (std::size_t k = 0; k < N; ++k) {
    auto c = sample_component_from_prior(h, 2, rng);
    REQUIRE(c.r_star[0] >= 1);
    sp += c.p_star[0];
    sr += c.r_star[1];
    st += c.theta_star[0];
  }
  CHECK(near_mean(sp / N, 0.4, 0.04, N));
  CHECK(near_mean(sr / N, 4.0, (1 - 0.25) / (0.25 * 0.25), N));
  CHECK(near_mean(st / N, 0.5, 1.0 / 12.0, N));
}

TEST_CASE("weight prior draws") {
  const std::size_t N = 100000;
  Rng rng(2);
  auto m = moments(N, [&] { return sample_weight_from_prior(2.0, rng); });
  CHECK(near_mean(m.mean, 2.0, 2.0, N));
  // var of the sample variance for Gamma(2,1): (mu4 - sigma^4) / N with mu4 = 3k(k+2) = 24
  CHECK(std::abs(m.var - 2.0) <= 4.0 * std::sqrt((24.0 - 4.0) / N));

  // normalized Gamma draws are Dirichlet: mean 1/m per component
  const int mdim = 4;
  std::vector<double> acc(mdim, 0.0);
  for (std::size_t k = 0; k < N; ++k) {
    std::vector<double> w(mdim);
    for (auto& v : w) v = sample_weight_from_prior(0.7, rng);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (int q = 0; q < mdim; ++q) acc[q] += w[q] / s;
  }
  // Dirichlet(0.7 x 4) component variance: a(a0 - a) / (a0^2 (a0 + 1))
  const double a = 0.7, a0 = 2.8;
  const double var = a * (a0 - a) / (a0 * a0 * (a0 + 1));
  for (int q = 0; q < mdim; ++q) CHECK(near_mean(acc[q] / N, 0.25, var, N));
}

TEST_CASE("geometric and shifted Poisson samplers") {
  const std::size_t N = 100000;
  Rng rng(3);
  std::vector<double> freq(6, 0.0);
  double sp = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const auto g = draw_geometric(rng, 0.4);
    REQUIRE(g >= 1);
    if (g < 6) freq[g] += 1;
    const auto p = draw_shifted_poisson(rng, 2.5);
    REQUIRE(p >= 1);
    sp += p;
  }
  for (int k = 1; k < 6; ++k) {
    const double pk = 0.4 * std::pow(0.6, k - 1);
    CHECK(near_mean(freq[k] / N, pk, pk * (1 - pk), N));
  }
  CHECK(near_mean(sp / N, 3.5, 2.5, N));
}

TEST_CASE("samplers are seed deterministic") {
  Hyperparams h;
  Rng a(99), b(99);
  for (int k = 0; k < 100; ++k) {
    auto ca = sample_component_from_prior(h, 3, a);
    auto cb = sample_component_from_prior(h, 3, b);
    CHECK(ca.p_star == cb.p_star);
    CHECK(ca.r_star == cb.r_star);
    CHECK(ca.theta_star == cb.theta_star);
  }
}

TEST_CASE("log categorical and log-sum-exp") {
  Rng rng(4);
  std::vector<double> lw{std::log(0.2), -INFINITY, std::log(0.8)};
  std::vector<double> f(3, 0);
  for (int k = 0; k < 50000; ++k) f[draw_log_categorical(rng, lw)] += 1;
  CHECK(f[1] == 0);
  CHECK(near_mean(f[0] / 50000, 0.2, 0.16, 50000));
  std::vector<double> bad{-INFINITY, -INFINITY};
  CHECK_THROWS(draw_log_categorical(rng, bad));
  std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
}

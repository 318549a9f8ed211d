#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hurdlemix/conditional.hpp"
#include "hurdlemix/synthetic.hpp"

using namespace hurdlemix;

namespace {

bool within(double x, double mu, double var, std::size_t n, double k = 4.0) {
  return std::abs(x - mu) <= k * std::sqrt(var / double(n));
}

OuterComponent outer(std::vector<double> p, std::vector<InnerComponent> inner, double w = 1.0) {
  OuterComponent o;
  o.gamma_w = w;
  o.p_star = std::move(p);
  o.inner = std::move(inner);
  return o;
}

InnerComponent inner(std::vector<std::uint32_t> r, std::vector<double> theta, double delta = 1.0) {
  return {delta, std::move(r), std::move(theta)};
}

}  // namespace

TEST_CASE("allocation with a single cell is deterministic") {
  CountDataset data(3, 1, 2, {0, 1, 4, 0, 2, 2});
  DatasetSummary s(data);
  ConditionalState st;
  st.components = {outer({0.4}, {inner({2}, {0.3})})};
  st.c = {0, 0, 0};
  st.z = {0, 0, 0};
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    sample_allocations(st, s, rng);
    CHECK(st.c == std::vector<int>{0, 0, 0});
    CHECK(st.z == std::vector<int>{0, 0, 0});
  }
}

TEST_CASE("allocation probabilities") {
  CountDataset data(1, 1, 1, {0});
  DatasetSummary s(data);
  Rng rng(2);
  const std::size_t N = 100000;
  SUBCASE("identical components split evenly") {
    ConditionalState st;
    st.components = {outer({0.4}, {inner({1}, {0.5})}), outer({0.4}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    double first = 0;
    for (std::size_t k = 0; k < N; ++k) {
      sample_allocations(st, s, rng);
      first += st.c[0] == 0;
    }
    CHECK(within(first / N, 0.5, 0.25, N));
  }
  SUBCASE("likelihood ratio 3 gives 0.75 / 0.25") {
    ConditionalState st;
    st.components = {outer({0.25}, {inner({1}, {0.5})}), outer({0.75}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    double first = 0;
    for (std::size_t k = 0; k < N; ++k) {
      sample_allocations(st, s, rng);
      first += st.c[0] == 0;
    }
    CHECK(within(first / N, 0.75, 0.1875, N));
  }
  SUBCASE("inner weights enter normalized within their outer component") {
    // outer 0 has two inner components with weights 1 and 3, outer 1 one.
    // Equal outer weights and likelihoods: cells (0,0), (0,1), (1,0) get 1/8, 3/8, 1/2.
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5}, 1.0), inner({1}, {0.5}, 3.0)}),
                     outer({0.5}, {inner({1}, {0.5}, 7.0)})};
    st.c = {0};
    st.z = {0};
    std::vector<double> f(3, 0);
    for (std::size_t k = 0; k < N; ++k) {
      sample_allocations(st, s, rng);
      f[st.c[0] == 1 ? 2 : st.z[0]] += 1;
    }
    CHECK(within(f[0] / N, 0.125, 0.125 * 0.875, N));
    CHECK(within(f[1] / N, 0.375, 0.375 * 0.625, N));
    CHECK(within(f[2] / N, 0.5, 0.25, N));
  }
}

TEST_CASE("relabel") {
  CountDataset data(3, 1, 1, {0, 3, 1});
  DatasetSummary s(data);
  SUBCASE("canonical state is unchanged") {
    ConditionalState st;
    st.components = {outer({0.3}, {inner({1}, {0.2}), inner({2}, {0.4})}),
                     outer({0.6}, {inner({3}, {0.5})})};
    st.c = {0, 0, 1};
    st.z = {0, 1, 0};
    const auto before = st;
    relabel(st);
    CHECK(st.c == before.c);
    CHECK(st.z == before.z);
    CHECK(st.components[0].inner[1].r_star == before.components[0].inner[1].r_star);
  }
  SUBCASE("only the middle component allocated") {
    ConditionalState st;
    st.components = {outer({0.3}, {inner({1}, {0.2})}),
                     outer({0.6}, {inner({1}, {0.1}), inner({4}, {0.7})}),
                     outer({0.9}, {inner({2}, {0.4})})};
    st.c = {1, 1, 1};
    st.z = {1, 1, 1};
    std::vector<double> ll_before;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& ic = st.components[1].inner[1];
      ll_before.push_back(subject_component_loglik(data, i, {st.components[1].p_star, ic.r_star, ic.theta_star}));
    }
    relabel(st);
    CHECK(st.c == std::vector<int>{0, 0, 0});
    CHECK(st.z == std::vector<int>{0, 0, 0});
    CHECK(st.components[0].p_star[0] == 0.6);
    CHECK(st.components[0].inner[0].r_star[0] == 4);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& ic = st.components[st.c[i]].inner[st.z[i]];
      CHECK(subject_component_loglik(data, i, {st.components[st.c[i]].p_star, ic.r_star,
                                               ic.theta_star}) == ll_before[i]);
    }
  }
}

TEST_CASE("u_bar full conditional") {
  ConditionalState st;
  st.c.assign(10, 0);
  st.z.assign(10, 0);
  st.components = {outer({0.5}, {inner({1}, {0.5})}, 2.0), outer({0.5}, {inner({1}, {0.5})}, 3.0)};
  Rng rng(3);
  const std::size_t N = 100000;
  double s1 = 0, s2 = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const double u = sample_u_bar(st, rng);
    s1 += u;
    s2 += u * u;
  }
  const double mean = s1 / N, var = s2 / N - mean * mean;
  CHECK(within(mean, 2.0, 0.4, N));
  // fourth central moment of Gamma(10, 5): 3k(k+2)/rate^4 = 360/625
  CHECK(std::abs(var - 0.4) <= 4.0 * std::sqrt((360.0 / 625 - 0.16) / N));
  st.components[0].gamma_w = 1e12;
  CHECK(sample_u_bar(st, rng) < 1e-9);
}

TEST_CASE("number of components") {
  Rng rng(4);
  for (int k = 0; k < 1000; ++k) CHECK(sample_num_components(3, 1e-12, 3.0, rng) == 3);
  for (int k = 0; k < 1000; ++k) CHECK(sample_num_components(2, 0.7, 5.0, rng) >= 2);

  // brute force q_x ∝ (x+K)!/x! psi^x Poi_0(K+x) with K = 2, psi = 0.5, Lambda = 1
  const unsigned K = 2;
  const double psi = 0.5, Lambda = 1.0;
  std::vector<double> q;
  for (unsigned x = 0; x <= 200; ++x) {
    const unsigned M = K + x;
    q.push_back(std::exp(std::lgamma(x + K + 1.0) - std::lgamma(x + 1.0) + x * std::log(psi) -
                         Lambda + (M - 1) * std::log(Lambda) - std::lgamma(double(M))));
  }
  const double tot = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& v : q) v /= tot;
  const auto pmf = num_components_pmf(K, psi, Lambda);
  for (std::size_t x = 0; x < std::min(pmf.size(), q.size()); ++x) {
    CHECK(pmf[x] == doctest::Approx(q[x]).epsilon(1e-10));
  }
  const std::size_t N = 100000;
  std::vector<double> f(8, 0);
  for (std::size_t k = 0; k < N; ++k) {
    const auto M = sample_num_components(K, psi, Lambda, rng);
    if (M - K < 8) f[M - K] += 1;
  }
  for (int x = 0; x < 5; ++x) CHECK(within(f[x] / N, q[x], q[x] * (1 - q[x]), N));
}

TEST_CASE("outer weights") {
  ConditionalState st;
  st.c = {0, 0, 0, 0};
  st.z = {0, 0, 0, 0};
  st.components = {outer({0.5}, {inner({1}, {0.5})}), outer({0.5}, {inner({1}, {0.5})})};
  Hyperparams h;
  Rng rng(5);
  const std::size_t N = 100000;
  double s0 = 0, s1 = 0, s1sq = 0;
  for (std::size_t k = 0; k < N; ++k) {
    sample_outer_weights(st, 1.0, h, rng);
    REQUIRE(st.components[0].gamma_w > 0);
    s0 += st.components[0].gamma_w;
    s1 += st.components[1].gamma_w;
    s1sq += st.components[1].gamma_w * st.components[1].gamma_w;
  }
  // n_0 = 4: Gamma(5, 2) has mean 2.5 and variance 1.25
  CHECK(within(s0 / N, 2.5, 1.25, N));
  // n_1 = 0 with u_bar = 1: Gamma(1, 2)
  CHECK(within(s1 / N, 0.5, 0.25, N));
  // u_bar = 0 and no data: the prior Gamma(1, 1)
  double sp = 0;
  st.c = {0, 0, 0, 0};
  for (std::size_t k = 0; k < N; ++k) {
    sample_outer_weights(st, 0.0, h, rng);
    sp += st.components[1].gamma_w;
  }
  CHECK(within(sp / N, 1.0, 1.0, N));
}

TEST_CASE("p* full conditional") {
  Hyperparams h;
  Rng rng(6);
  SUBCASE("Beta(4, 2)") {
    // three positive cells and one zero across two subjects
    CountDataset data(2, 1, 2, {1, 3, 0, 2});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0, 0};
    st.z = {0, 0};
    const std::size_t N = 100000;
    double sum = 0;
    for (std::size_t k = 0; k < N; ++k) {
      update_p_star(st, s, h, rng, 0);
      sum += st.components[0].p_star[0];
    }
    CHECK(within(sum / N, 2.0 / 3.0, (4.0 * 2.0) / (36.0 * 7.0), N));
  }
  SUBCASE("empty cluster draws from the prior") {
    CountDataset data(1, 1, 1, {5});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})}), outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    h.alpha = 2;
    h.beta = 6;
    const std::size_t N = 50000;
    double sum = 0;
    for (std::size_t k = 0; k < N; ++k) {
      update_p_star(st, s, h, rng, 1);
      sum += st.components[1].p_star[0];
    }
    CHECK(within(sum / N, 0.25, 2.0 * 6.0 / (64.0 * 9.0), N));
  }
  SUBCASE("large cluster concentrates on the empirical rate") {
    const std::size_t T = 10000;
    std::bernoulli_distribution b(0.7);
    std::vector<std::uint64_t> y(T);
    for (auto& v : y) v = b(rng) ? 2 : 0;
    CountDataset data(1, 1, T, y);
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    update_p_star(st, s, h, rng, 0);
    CHECK(std::abs(st.components[0].p_star[0] - 0.7) < 0.02);
  }
}

TEST_CASE("theta* full conditional") {
  Hyperparams h;
  Rng rng(7);
  const std::size_t N = 100000;
  const double mean43 = 4.0 / 7.0, var43 = 12.0 / (49.0 * 8.0);
  SUBCASE("one observation y = 4 with r = 2") {
    CountDataset data(1, 1, 1, {4});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({2}, {0.5})})};
    st.c = {0};
    st.z = {0};
    double sum = 0;
    for (std::size_t k = 0; k < N; ++k) {
      update_theta_star(st, s, h, rng, 0, 0);
      sum += st.components[0].inner[0].theta_star[0];
    }
    CHECK(within(sum / N, mean43, var43, N));
  }
  SUBCASE("observations 2 and 3 with r = 1") {
    CountDataset data(2, 1, 1, {2, 3});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0, 0};
    st.z = {0, 0};
    double sum = 0;
    for (std::size_t k = 0; k < N; ++k) {
      update_theta_star(st, s, h, rng, 0, 0);
      sum += st.components[0].inner[0].theta_star[0];
    }
    CHECK(within(sum / N, mean43, var43, N));
  }
  SUBCASE("no positives gives the prior") {
    CountDataset data(1, 1, 3, {0, 0, 0});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    h.eta = 3;
    h.lambda = 1;
    double sum = 0;
    for (std::size_t k = 0; k < N; ++k) {
      update_theta_star(st, s, h, rng, 0, 0);
      sum += st.components[0].inner[0].theta_star[0];
    }
    CHECK(within(sum / N, 0.75, 3.0 / (16.0 * 5.0), N));
  }
}

TEST_CASE("r* full conditional") {
  SUBCASE("no positives: the geometric prior") {
    const auto pmf = r_full_conditional({}, 0.4, 0.3);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(pmf[k] == doctest::Approx(0.3 * std::pow(0.7, double(k))).epsilon(1e-9));
    }
  }
  SUBCASE("all ones: geometric with success 1 - (1 - zeta)(1 - theta)^N") {
    const std::vector<std::uint64_t> ones(3, 1);
    const double zeta = 0.5, theta = 0.2;
    const double q = (1 - zeta) * std::pow(1 - theta, 3.0);
    const auto pmf = r_full_conditional(ones, theta, zeta);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(pmf[k] == doctest::Approx((1 - q) * std::pow(q, double(k))).epsilon(1e-9));
    }
  }
  SUBCASE("single y = 3 against brute force") {
    const std::vector<std::uint64_t> y{3};
    std::vector<double> w;
    for (unsigned r = 1; r <= 1000; ++r) {
      // C(r + 1, 2) 0.5^(r - 1) 0.5^r
      w.push_back(0.5 * (r + 1.0) * r * std::pow(0.5, r - 1.0) * std::pow(0.5, double(r)));
    }
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    const auto pmf = r_full_conditional(y, 0.5, 0.5);
    for (std::size_t k = 0; k < 15; ++k) CHECK(pmf[k] == doctest::Approx(w[k] / tot).epsilon(1e-9));

    CountDataset data(1, 1, 1, {3});
    DatasetSummary s(data);
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5})})};
    st.c = {0};
    st.z = {0};
    Hyperparams h;
    Rng rng(8);
    const std::size_t N = 100000;
    std::vector<double> f(6, 0);
    for (std::size_t k = 0; k < N; ++k) {
      update_r_star(st, s, h, rng, 0, 0);
      const auto r = st.components[0].inner[0].r_star[0];
      if (r <= 5) f[r] += 1;
    }
    for (int r = 1; r <= 5; ++r) {
      const double p = w[r - 1] / tot;
      CHECK(within(f[r] / N, p, p * (1 - p), N));
    }
  }
}

TEST_CASE("inner block") {
  Hyperparams h;
  Rng rng(9);
  CountDataset data(1, 1, 1, {2});
  DatasetSummary s(data);
  const std::size_t N = 50000;
  double su = 0;
  for (std::size_t k = 0; k < N; ++k) {
    ConditionalState st;
    st.components = {outer({0.5}, {inner({1}, {0.5}, 2.0), inner({2}, {0.3}, 2.0)})};
    st.c = {0};
    st.z = {0};
    update_inner_block(st, s, h, rng, 0);
    su += st.components[0].u_m;
    REQUIRE(st.components[0].inner.size() >= 1);
    for (const auto& ic : st.components[0].inner) REQUIRE(ic.delta > 0);
  }
  // n_m = 1: u_m ~ Exponential(sum Delta = 4)
  CHECK(within(su / N, 0.25, 1.0 / 16.0, N));
}

TEST_CASE("unallocated components follow the prior") {
  Hyperparams h;
  h.alpha = 2;
  h.beta = 2;
  h.Lambda_S = 2.0;
  CountDataset data(1, 1, 1, {1});
  DatasetSummary s(data);
  Rng rng(10);
  ConditionalState st;
  st.components = {outer({0.5}, {inner({1}, {0.5})}), outer({0.5}, {inner({1}, {0.5})})};
  st.c = {0};
  st.z = {0};
  const std::size_t N = 20000;
  std::vector<double> fs(5, 0);
  double sp = 0;
  for (std::size_t k = 0; k < N; ++k) {
    update_unallocated_outer(st, h, rng, 1);
    const auto S = st.components[1].inner.size();
    REQUIRE(S >= 1);
    if (S < 5) fs[S] += 1;
    sp += st.components[1].p_star[0];
  }
  for (int S = 1; S < 5; ++S) {
    const double p = std::exp(-2.0 + (S - 1) * std::log(2.0) - std::lgamma(double(S)));
    CHECK(within(fs[S] / N, p, p * (1 - p), N));
  }
  CHECK(within(sp / N, 0.5, 0.05, N));
  // M = K leaves nothing to redraw
  ConditionalState one;
  one.components = {outer({0.5}, {inner({1}, {0.5})})};
  one.c = {0};
  one.z = {0};
  update_unallocated_outer(one, h, rng, 1);
  CHECK(one.components[0].p_star[0] == 0.5);
}

TEST_CASE("sweep keeps the state consistent") {
  Rng gen(11);
  GroundTruth g = scenario("three-outer");
  g.n = 30;
  auto sim = generate(g, gen);
  DatasetSummary s(sim.data);
  Hyperparams h;
  Rng rng(12);
  auto st = initial_conditional_state(s, h, rng);
  for (int it = 0; it < 1000; ++it) {
    sweep(st, s, h, rng);
    const std::size_t K = st.allocated_outer();
    REQUIRE(K <= st.M());
    std::set<int> cs(st.c.begin(), st.c.end());
    REQUIRE(cs.size() == K);
    REQUIRE(*cs.rbegin() == int(K) - 1);
    for (std::size_t m = 0; m < K; ++m) {
      std::set<int> zs;
      for (std::size_t i = 0; i < st.n(); ++i) if (st.c[i] == int(m)) zs.insert(st.z[i]);
      REQUIRE(zs.size() == st.allocated_inner(m));
      REQUIRE(*zs.rbegin() == int(zs.size()) - 1);
      REQUIRE(st.allocated_inner(m) <= st.components[m].inner.size());
      REQUIRE(st.components[m].gamma_w > 0);
    }
  }
}

TEST_CASE("single subject always forms one cluster") {
  CountDataset data(1, 2, 2, {0, 3, 1, 0});
  Hyperparams h;
  ChainConfig cfg;
  cfg.iters = 300;
  auto tr = run_conditional_chain(data, h, cfg);
  for (const auto& r : tr.records) CHECK(r.K == 1);
}

TEST_CASE("chain bookkeeping") {
  Rng gen(13);
  GroundTruth g = scenario("single-cluster");
  g.n = 20;
  auto sim = generate(g, gen);
  Hyperparams h;
  ChainConfig cfg;
  cfg.iters = 107;
  cfg.burnin = 7;
  cfg.thin = 4;
  cfg.seed = 42;
  auto a = run_conditional_chain(sim.data, h, cfg);
  auto b = run_conditional_chain(sim.data, h, cfg);
  CHECK(a.records.size() == 25);
  CHECK(a.records == b.records);
  CHECK(a.records.front().iteration == 11);

  cfg.fixed_outer.assign(20, 0);
  for (int i = 10; i < 20; ++i) cfg.fixed_outer[i] = 1;
  auto f = run_conditional_chain(sim.data, h, cfg);
  for (const auto& r : f.records) {
    CHECK(r.c == cfg.fixed_outer);
    CHECK(r.M == 2);
  }
  cfg.iters = 5;
  cfg.burnin = 5;
  CHECK_THROWS_AS(run_conditional_chain(sim.data, h, cfg), std::invalid_argument);
}

TEST_CASE("log-likelihood matches a from-scratch sum") {
  Rng gen(14);
  GroundTruth g = scenario("nested-heavy");
  g.n = 25;
  auto sim = generate(g, gen);
  DatasetSummary s(sim.data);
  Hyperparams h;
  Rng rng(15);
  auto st = initial_conditional_state(s, h, rng);
  for (int it = 1; it <= 300; ++it) {
    sweep(st, s, h, rng);
    if (it % 100) continue;
    double direct = 0;
    for (std::size_t i = 0; i < st.n(); ++i) {
      const auto& oc = st.components[st.c[i]];
      const auto& ic = oc.inner[st.z[i]];
      direct += subject_component_loglik(sim.data, i, {oc.p_star, ic.r_star, ic.theta_star});
    }
    CHECK(conditional_loglik(st, s) == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("unallocated inner components are drawn from the prior") {
  Hyperparams h;
  h.eta = 2;
  h.lambda = 3;
  h.zeta = 0.4;
  CountDataset data(2, 1, 2, {3, 1, 0, 2});
  DatasetSummary s(data);
  Rng rng(16);
  ConditionalState st;
  st.components = {outer({0.5}, {inner({1}, {0.5})})};
  st.c = {0, 0};
  st.z = {0, 0};
  std::vector<double> theta;
  double rsum = 0;
  for (int k = 0; k < 10000; ++k) {
    update_inner_block(st, s, h, rng, 0);
    for (std::size_t j = 1; j < st.components[0].inner.size(); ++j) {
      theta.push_back(st.components[0].inner[j].theta_star[0]);
      rsum += st.components[0].inner[j].r_star[0];
    }
    st.components[0].inner.resize(1);
  }
  REQUIRE(theta.size() > 1000);
  std::sort(theta.begin(), theta.end());
  // KS distance to Beta(2, 3), whose cdf is 6x^2 - 8x^3 + 3x^4
  double D = 0;
  const double N = double(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double x = theta[k], F = 6 * x * x - 8 * x * x * x + 3 * x * x * x * x;
    D = std::max({D, std::abs(F - k / N), std::abs(F - (k + 1) / N)});
  }
  CHECK(D < 1.63 / std::sqrt(N));
  // Geometric(0.4) mean 2.5 and variance 3.75
  CHECK(within(rsum / N, 2.5, 3.75, std::size_t(N)));
}

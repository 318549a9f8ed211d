#include <doctest.h>

#include <cmath>
#include <random>

#include "hurdlemix/summaries.hpp"
#include "oracles/oracles.hpp"

using namespace hurdlemix;

namespace {

TraceRecord rec(std::vector<int> c, std::vector<int> z = {}) {
  TraceRecord r;
  if (z.empty()) z.assign(c.size(), 0);
  r.K = 1 + *std::max_element(c.begin(), c.end());
  r.c = std::move(c);
  r.z = std::move(z);
  return r;
}

// Random PSM as the co-clustering of a few random partitions.
CoClusteringMatrix random_psm(std::size_t n, std::mt19937_64& rng) {
  std::vector<TraceRecord> recs;
  std::uniform_int_distribution<int> lab(0, 3);
  for (int k = 0; k < 7; ++k) {
    std::vector<int> c(n);
    for (auto& v : c) v = lab(rng);
    recs.push_back(rec(canonicalize(c)));
  }
  return coclustering(recs, Level::outer);
}

double mixture_pmf(unsigned y, std::vector<std::tuple<double, unsigned, double>> comps) {
  double v = 0;
  for (auto [w, r, th] : comps) v += w * double(oracle::shifted_nb(y, r, th));
  return v;
}

}  // namespace

TEST_CASE("co-clustering") {
  SUBCASE("identical partitions give a 0/1 matrix") {
    std::vector<TraceRecord> recs(5, rec({0, 1, 0, 2}));
    auto psm = coclustering(recs, Level::outer);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t l = 0; l < 4; ++l) {
        CHECK(psm(i, l) == (recs[0].c[i] == recs[0].c[l] ? 1.0 : 0.0));
      }
    }
  }
  SUBCASE("together then apart") {
    std::vector<TraceRecord> recs{rec({0, 0}), rec({0, 1})};
    CHECK(coclustering(recs, Level::outer)(0, 1) == 0.5);
  }
  SUBCASE("inner level requires both labels") {
    std::vector<TraceRecord> recs{rec({0, 0, 0}, {0, 1, 0}), rec({0, 0, 1}, {0, 0, 0})};
    auto psm = coclustering(recs, Level::inner);
    CHECK(psm(0, 1) == 0.5);
    CHECK(psm(0, 2) == 0.5);
    CHECK(psm(1, 2) == 0.0);
  }
  SUBCASE("equivariance and label invariance") {
    std::vector<TraceRecord> recs{rec({0, 1, 1, 2}), rec({0, 0, 1, 1}), rec({0, 1, 0, 1})};
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<TraceRecord> permuted, relabeled;
    for (const auto& r : recs) {
      std::vector<int> c(4), swapped(4);
      for (std::size_t i = 0; i < 4; ++i) c[i] = r.c[perm[i]];
      permuted.push_back(rec(canonicalize(c)));
      for (std::size_t i = 0; i < 4; ++i) swapped[i] = int(r.K) - 1 - r.c[i];
      auto rr = r;
      rr.c = swapped;
      relabeled.push_back(rr);
    }
    auto a = coclustering(recs, Level::outer);
    auto b = coclustering(permuted, Level::outer);
    auto c = coclustering(relabeled, Level::outer);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a(i, i) == 1.0);
      for (std::size_t l = 0; l < 4; ++l) {
        CHECK(b(i, l) == a(perm[i], perm[l]));
        CHECK(c(i, l) == a(i, l));
        CHECK(a(i, l) == a(l, i));
      }
    }
    CHECK(cluster_count_posterior(relabeled).K == cluster_count_posterior(recs).K);
  }
  CHECK_THROWS_AS(coclustering(std::vector<TraceRecord>{}, Level::outer), std::invalid_argument);
}

TEST_CASE("Binder estimate") {
  SUBCASE("block matrix") {
    std::vector<TraceRecord> recs{rec({0, 0, 1, 1}), rec({0, 1, 2, 3}), rec({0, 0, 1, 1})};
    CoClusteringMatrix psm = coclustering(std::vector<TraceRecord>{recs[0]}, Level::outer);
    auto parts = visited_partitions(recs, Level::outer);
    CHECK(parts.size() == 2);
    auto best = binder_estimate(psm, parts);
    CHECK(best.loss == 0.0);
    CHECK(best.partition == Partition{0, 0, 1, 1});
  }
  SUBCASE("n = 1") {
    std::vector<TraceRecord> recs{rec({0})};
    auto best = binder_estimate(recs, Level::outer);
    CHECK(best.partition == Partition{0});
    CHECK(best.loss == 0.0);
  }
  SUBCASE("ties go to the first candidate") {
    CoClusteringMatrix psm{2, Level::outer, {1, 0.5, 0.5, 1}};
    std::vector<Partition> cands{{0, 1}, {0, 0}};
    CHECK(binder_estimate(psm, cands).index == 0);
    std::swap(cands[0], cands[1]);
    CHECK(binder_estimate(psm, cands).index == 0);
  }
  SUBCASE("n = 7 lattice equals exhaustive search") {
    std::mt19937_64 rng(41);
    const auto lattice = oracle::set_partitions(7);
    CHECK(lattice.size() == 877);
    for (int rep = 0; rep < 5; ++rep) {
      auto psm = random_psm(7, rng);
      auto a = binder_estimate(psm, lattice);
      auto b = binder_exhaustive(psm);
      CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
      for (const auto& p : lattice) CHECK(binder_loss(psm, p) >= a.loss - 1e-12);
    }
  }
}

TEST_CASE("nested Binder estimate") {
  std::vector<TraceRecord> recs{rec({0, 0, 0, 1, 1}, {0, 0, 1, 0, 0}),
                                rec({0, 0, 0, 1, 1}, {0, 0, 1, 0, 0}),
                                rec({0, 0, 0, 1, 1}, {0, 1, 1, 0, 1})};
  auto est = nested_binder_estimate(recs);
  CHECK(est.outer == Partition{0, 0, 0, 1, 1});
  CHECK(est.inner == Partition{0, 0, 1, 0, 0});
}

TEST_CASE("cluster count posterior") {
  std::vector<TraceRecord> recs(4, rec({0, 1, 1}));
  for (auto& r : recs) {
    r.M = 3;
    r.K_inner = {1, 1};
  }
  auto cp = cluster_count_posterior(recs);
  CHECK(cp.K == Pmf{{2, 1.0}});
  CHECK(cp.M == Pmf{{3, 1.0}});
  CHECK(cp.total_inner == Pmf{{2, 1.0}});
  recs[0].K = 1;
  recs[0].c = {0, 0, 0};
  recs[0].K_inner = {3};
  cp = cluster_count_posterior(recs);
  double tot = 0;
  for (auto [k, v] : cp.K) {
    tot += v;
    CHECK(k <= 3);
  }
  CHECK(tot == doctest::Approx(1.0));
  CHECK(cp.total_inner.at(3) == 0.25);
}

TEST_CASE("cluster pmf estimate") {
  std::vector<std::uint64_t> grid;
  for (std::uint64_t y = 1; y <= 200; ++y) grid.push_back(y);
  SUBCASE("frozen single component") {
    std::vector<TraceRecord> recs(10, rec({0, 0}));
    for (auto& r : recs) r.components = {OuterDraw{{0.5}, {InnerDraw{1.0, {3}, {0.4}}}}};
    auto band = cluster_pmf_estimate(recs, 0, 0, grid);
    double tot = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double want = double(oracle::shifted_nb(unsigned(grid[k]), 3, 0.4L));
      CHECK(band.mean[k] == doctest::Approx(want).epsilon(1e-10));
      CHECK(band.lower[k] == doctest::Approx(want).epsilon(1e-10));
      CHECK(band.upper[k] == doctest::Approx(want).epsilon(1e-10));
      tot += band.mean[k];
    }
    CHECK(tot <= 1.0 + 1e-12);
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("50/50 mixture") {
    std::vector<TraceRecord> recs(3, rec({0}));
    for (auto& r : recs) {
      r.components = {OuterDraw{{0.5}, {InnerDraw{0.5, {1}, {0.2}}, InnerDraw{0.5, {1}, {0.8}}}}};
    }
    auto band = cluster_pmf_estimate(recs, 0, 0, grid);
    for (std::size_t k = 0; k < 30; ++k) {
      const double want = mixture_pmf(unsigned(grid[k]), {{0.5, 1, 0.2}, {0.5, 1, 0.8}});
      CHECK(band.mean[k] == doctest::Approx(want).epsilon(1e-10));
    }
  }
  SUBCASE("absent cluster") {
    std::vector<TraceRecord> recs(2, rec({0}));
    for (auto& r : recs) r.components = {OuterDraw{{0.5}, {InnerDraw{1.0, {1}, {0.2}}}}};
    CHECK_THROWS_AS(cluster_pmf_estimate(recs, 3, 0, grid), std::invalid_argument);
  }
}

TEST_CASE("average-linkage order keeps blocks together") {
  std::vector<TraceRecord> recs{rec(canonicalize(std::vector<int>{0, 1, 0, 1, 2, 2})),
                                rec(canonicalize(std::vector<int>{0, 1, 0, 1, 2, 2}))};
  auto order = average_linkage_order(coclustering(recs, Level::outer));
  CHECK(order.size() == 6);
  std::vector<int> lab;
  for (auto i : order) lab.push_back(recs[0].c[i]);
  int changes = 0;
  for (std::size_t k = 1; k < lab.size(); ++k) changes += lab[k] != lab[k - 1];
  CHECK(changes == 2);
}

TEST_CASE("adjusted Rand index") {
  CHECK(adjusted_rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(std::vector<int>{0, 0, 1, 1, 2, 2}, std::vector<int>{0, 1, 2, 0, 1, 2}) < 0.0);
  // 2x2 table [[2,1],[0,2]]: index computed by hand
  const std::vector<int> a{0, 0, 0, 1, 1}, b{0, 0, 1, 1, 1};
  // sum C(n_ij,2) = 1 + 0 + 0 + 1 = 2; rows C(3,2)+C(2,2) = 4; cols 1 + 3 = 4; C(5,2) = 10
  const double expected = (2 - 4.0 * 4 / 10) / (0.5 * (4 + 4) - 4.0 * 4 / 10);
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(expected));
}

#include "hurdlemix/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace hurdlemix {

namespace {

void check_weights(const std::vector<double>& w, const char* what) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " weight is negative");
    s += v;
  }
  if (w.empty() || std::abs(s - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + " weights must sum to 1");
  }
}

std::size_t draw_index(Rng& rng, const std::vector<double>& w) {
  double u = draw_uniform(rng), acc = 0.0;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    acc += w[k];
    if (u < acc) return k;
  }
  return w.size() - 1;
}

TrueInner inner(std::vector<std::uint32_t> r, std::vector<double> theta, double w) {
  return {w, std::move(r), std::move(theta)};
}

GroundTruth three_outer() {
  GroundTruth g;
  g.n = 150;
  g.d = 7;
  g.T = 7;
  const std::vector<std::uint32_t> r_a(7, 2), r_b(7, 6), r_c{1, 3, 1, 3, 1, 3, 1};
  const std::vector<double> th_a(7, 0.2), th_b(7, 0.6), th_c{0.5, 0.3, 0.5, 0.3, 0.5, 0.3, 0.5};
  g.outer.push_back({1.0 / 3, {0.85, 0.85, 0.85, 0.15, 0.15, 0.15, 0.5},
                     {inner(r_a, th_a, 0.5), inner(r_b, th_b, 0.5)}});
  g.outer.push_back({1.0 / 3, {0.15, 0.15, 0.15, 0.85, 0.85, 0.85, 0.5}, {inner(r_c, th_c, 1.0)}});
  g.outer.push_back({1.0 / 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9}, {inner(r_a, th_b, 1.0)}});
  return g;
}

GroundTruth single_cluster() {
  GroundTruth g;
  g.n = 60;
  g.d = 3;
  g.T = 5;
  g.outer.push_back({1.0, {0.6, 0.4, 0.7}, {inner({2, 2, 2}, {0.5, 0.5, 0.5}, 1.0)}});
  return g;
}

GroundTruth nested_heavy() {
  GroundTruth g;
  g.n = 200;
  g.d = 4;
  g.T = 6;
  TrueOuter o{1.0, {0.7, 0.7, 0.7, 0.7}, {}};
  o.inner.push_back(inner({1, 1, 1, 1}, {0.05, 0.05, 0.05, 0.05}, 0.25));
  o.inner.push_back(inner({8, 8, 8, 8}, {0.2, 0.2, 0.2, 0.2}, 0.25));
  o.inner.push_back(inner({2, 2, 2, 2}, {0.8, 0.8, 0.8, 0.8}, 0.25));
  o.inner.push_back(inner({1, 10, 1, 10}, {0.5, 0.1, 0.5, 0.1}, 0.25));
  g.outer.push_back(std::move(o));
  return g;
}

}  // namespace

void GroundTruth::check() const {
  if (n == 0 || d == 0 || T == 0) throw std::invalid_argument("truth needs n, d, T >= 1");
  std::vector<double> w;
  for (const auto& o : outer) {
    w.push_back(o.weight);
    if (o.p_star.size() != d) throw std::invalid_argument("p* has wrong length");
    for (double p : o.p_star) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p* outside [0, 1]");
    }
    std::vector<double> wi;
    for (const auto& s : o.inner) {
      wi.push_back(s.weight);
      if (s.r_star.size() != d || s.theta_star.size() != d) {
        throw std::invalid_argument("inner parameters have wrong length");
      }
      for (auto r : s.r_star) {
        if (r < 1) throw std::invalid_argument("r* must be >= 1");
      }
      for (double t : s.theta_star) {
        if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("theta* outside [0, 1)");
      }
    }
    check_weights(wi, "inner");
  }
  check_weights(w, "outer");
}

SyntheticData generate(const GroundTruth& truth, Rng& rng) {
  truth.check();
  const std::size_t n = truth.n, d = truth.d, T = truth.T;
  SyntheticData out;
  out.outer.resize(n);
  out.inner.resize(n);
  std::vector<double> wo;
  for (const auto& o : truth.outer) wo.push_back(o.weight);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = draw_index(rng, wo);
    std::vector<double> wi;
    for (const auto& s : truth.outer[m].inner) wi.push_back(s.weight);
    out.outer[i] = int(m);
    out.inner[i] = int(draw_index(rng, wi));
  }
  const std::uint64_t base = rng();
  std::vector<std::uint64_t> counts(n * d * T);
  for (std::size_t i = 0; i < n; ++i) {
    Rng sub(substream_seed(base, i));
    const auto& o = truth.outer[std::size_t(out.outer[i])];
    const auto& s = o.inner[std::size_t(out.inner[i])];
    for (std::size_t j = 0; j < d; ++j) {
      std::bernoulli_distribution nonzero(o.p_star[j]);
      std::negative_binomial_distribution<std::uint64_t> excess(s.r_star[j],
                                                                1.0 - s.theta_star[j]);
      for (std::size_t t = 0; t < T; ++t) {
        std::uint64_t y = 0;
        if (nonzero(sub)) y = 1 + excess(sub);
        counts[(i * d + j) * T + t] = y;
      }
    }
  }
  out.data = CountDataset(n, d, T, std::move(counts));
  return out;
}

const std::map<std::string, GroundTruth>& standard_scenarios() {
  static const std::map<std::string, GroundTruth> presets{
      {"three-outer", three_outer()},
      {"single-cluster", single_cluster()},
      {"nested-heavy", nested_heavy()},
  };
  return presets;
}

const GroundTruth& scenario(const std::string& name) {
  const auto& all = standard_scenarios();
  auto it = all.find(name);
  if (it == all.end()) throw std::invalid_argument("unknown scenario '" + name + "'");
  return it->second;
}

}  // namespace hurdlemix

#include "hurdlemix/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hurdlemix/errors.hpp"
#include "hurdlemix/marginal.hpp"

namespace hurdlemix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

InnerComponent inner_from_prior(const Hyperparams& h, std::size_t d, Rng& rng) {
  InnerComponent comp;
  comp.delta = sample_weight_from_prior(h.gamma_S, rng);
  comp.r_star.resize(d);
  comp.theta_star.resize(d);
  for (std::size_t j = 0; j < d; ++j) comp.r_star[j] = draw_geometric(rng, h.zeta);
  for (std::size_t j = 0; j < d; ++j) comp.theta_star[j] = draw_beta(rng, h.eta, h.lambda);
  return comp;
}

void outer_from_prior(OuterComponent& comp, const Hyperparams& h, std::size_t d,
                      Rng& rng) {
  comp.p_star.resize(d);
  for (std::size_t j = 0; j < d; ++j) comp.p_star[j] = draw_beta(rng, h.alpha, h.beta);
  const std::size_t S = draw_shifted_poisson(rng, h.Lambda_S);
  comp.inner.clear();
  for (std::size_t s = 0; s < S; ++s) comp.inner.push_back(inner_from_prior(h, d, rng));
}

// Sorted (value, multiplicity) pairs of the positive counts of process j over
// the subjects in inner cluster (m, s).
struct Histogram {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;
  std::uint64_t total = 0;
  std::uint64_t excess = 0;
};

Histogram gather_positives(const ConditionalState& state, const DatasetSummary& data,
                           std::size_t m, std::size_t s, std::size_t j) {
  std::vector<std::uint64_t> values;
  for (std::size_t i = 0; i < state.n(); ++i) {
    if (state.c[i] != int(m) || state.z[i] != int(s)) continue;
    auto pos = data.positives(i, j);
    values.insert(values.end(), pos.begin(), pos.end());
  }
  std::sort(values.begin(), values.end());
  Histogram hist;
  for (std::uint64_t y : values) {
    if (hist.entries.empty() || hist.entries.back().first != y) {
      hist.entries.emplace_back(y, 0);
    }
    ++hist.entries.back().second;
    ++hist.total;
    hist.excess += y - 1;
  }
  return hist;
}

std::vector<double> r_full_conditional_hist(const Histogram& hist, double theta,
                                            double zeta) {
  constexpr std::size_t kCap = 100000;
  const double log_tol = std::log(1e-10);
  auto log_term = [&](std::uint64_t r) {
    double v = double(r - 1) * std::log1p(-zeta) +
               double(r) * double(hist.total) * std::log1p(-theta);
    for (const auto& [y, k] : hist.entries) v += double(k) * log_nb_coefficient(y, r);
    return v;
  };
  std::vector<double> logw;
  double running = kNegInf;
  double prev = log_term(1);
  logw.push_back(prev);
  running = prev;
  for (std::uint64_t r = 2;; ++r) {
    if (r > kCap) throw NumericError("r* full conditional: truncation cap 1e5 reached");
    const double cur = log_term(r);
    logw.push_back(cur);
    running = std::max(running, cur) +
              std::log1p(std::exp(std::min(running, cur) - std::max(running, cur)));
    // Successive ratios only decrease, so once below one the remaining mass is
    // bounded by a geometric series.
    const double log_ratio = cur - prev;
    if (log_ratio < 0.0) {
      const double ratio = std::exp(log_ratio);
      const double tail = cur + std::log(ratio) - std::log1p(-ratio);
      if (tail < running + log_tol) break;
    }
    prev = cur;
  }
  std::vector<double> p(logw.size());
  for (std::size_t k = 0; k < logw.size(); ++k) p[k] = std::exp(logw[k] - running);
  return p;
}

}  // namespace

std::size_t ConditionalState::allocated_outer() const {
  std::vector<bool> seen(M(), false);
  std::size_t K = 0;
  for (int m : c) {
    if (!seen[m]) {
      seen[m] = true;
      ++K;
    }
  }
  return K;
}

std::size_t ConditionalState::allocated_inner(std::size_t m) const {
  std::vector<bool> seen(components[m].inner.size(), false);
  std::size_t K = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] != int(m) || seen[z[i]]) continue;
    seen[z[i]] = true;
    ++K;
  }
  return K;
}

std::vector<std::size_t> ConditionalState::outer_sizes() const {
  std::vector<std::size_t> sizes(M(), 0);
  for (int m : c) ++sizes[m];
  return sizes;
}

std::vector<std::size_t> ConditionalState::inner_sizes(std::size_t m) const {
  std::vector<std::size_t> sizes(components[m].inner.size(), 0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == int(m)) ++sizes[z[i]];
  }
  return sizes;
}

ConditionalState initial_conditional_state(const DatasetSummary& data,
                                           const Hyperparams& h, Rng& rng,
                                           const std::vector<int>& fixed_outer) {
  const std::size_t n = data.n(), d = data.d();
  ConditionalState state;
  state.c.resize(n);
  state.z.assign(n, 0);
  if (!fixed_outer.empty()) {
    if (fixed_outer.size() != n) {
      throw std::invalid_argument("fixed outer partition has wrong length");
    }
    state.c = fixed_outer;
  } else {
    const std::size_t groups =
        std::min<std::size_t>(n, std::size_t(std::ceil(h.Lambda_M)) + 1);
    std::uniform_int_distribution<int> pick(0, int(groups) - 1);
    for (auto& ci : state.c) ci = pick(rng);
  }
  int max_label = *std::max_element(state.c.begin(), state.c.end());
  state.components.resize(std::size_t(max_label) + 1);
  for (auto& comp : state.components) {
    comp.gamma_w = sample_weight_from_prior(h.gamma_M, rng);
    comp.p_star.resize(d);
    for (std::size_t j = 0; j < d; ++j) comp.p_star[j] = draw_beta(rng, h.alpha, h.beta);
    comp.inner = {inner_from_prior(h, d, rng)};
    comp.u_m = 1.0;
  }
  state.u_bar = 1.0;
  relabel(state);
  if (!fixed_outer.empty() && state.c != fixed_outer) {
    throw std::invalid_argument(
        "fixed outer partition must use every label 0..K-1");
  }
  resize_outer(state, state.allocated_outer());
  return state;
}

void sample_allocations(ConditionalState& state, const DatasetSummary& data,
                        Rng& rng, bool keep_outer) {
  const std::size_t M = state.M(), d = data.d();

  struct InnerCache {
    double log_weight;
    std::vector<double> log_theta, log1m_theta;
    const std::vector<std::uint32_t>* r;
  };
  std::vector<double> log_gamma(M);
  std::vector<std::vector<double>> log_p(M), log1m_p(M);
  std::vector<std::vector<InnerCache>> inner(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& comp = state.components[m];
    log_gamma[m] = std::log(comp.gamma_w);
    log_p[m].resize(d);
    log1m_p[m].resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      log_p[m][j] = std::log(comp.p_star[j]);
      log1m_p[m][j] = std::log1p(-comp.p_star[j]);
    }
    double total_delta = 0.0;
    for (const auto& ic : comp.inner) total_delta += ic.delta;
    const double log_total = std::log(total_delta);
    for (const auto& ic : comp.inner) {
      InnerCache cache{std::log(ic.delta) - log_total, {}, {}, &ic.r_star};
      cache.log_theta.resize(d);
      cache.log1m_theta.resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        cache.log_theta[j] = std::log(ic.theta_star[j]);
        cache.log1m_theta[j] = std::log1p(-ic.theta_star[j]);
      }
      inner[m].push_back(std::move(cache));
    }
  }

  std::vector<double> logw;
  std::vector<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < state.n(); ++i) {
    logw.clear();
    cells.clear();
    const std::size_t m_lo = keep_outer ? std::size_t(state.c[i]) : 0;
    const std::size_t m_hi = keep_outer ? m_lo + 1 : M;
    for (std::size_t m = m_lo; m < m_hi; ++m) {
      double outer_ll = keep_outer ? 0.0 : log_gamma[m];
      if (!keep_outer) {
        for (std::size_t j = 0; j < d; ++j) {
          const CellStats& cs = data.cell(i, j);
          outer_ll += cs.zeros * log1m_p[m][j] + cs.positives * log_p[m][j];
        }
      }
      for (std::size_t s = 0; s < inner[m].size(); ++s) {
        const InnerCache& ic = inner[m][s];
        double ll = outer_ll + ic.log_weight;
        for (std::size_t j = 0; j < d; ++j) {
          const CellStats& cs = data.cell(i, j);
          if (cs.positives == 0) continue;
          const std::uint32_t r = (*ic.r)[j];
          for (std::uint64_t y : data.positives(i, j)) ll += log_nb_coefficient(y, r);
          ll += double(cs.excess) * ic.log_theta[j] +
                double(r) * double(cs.positives) * ic.log1m_theta[j];
        }
        logw.push_back(ll);
        cells.emplace_back(int(m), int(s));
      }
    }
    const std::size_t k = draw_log_categorical(rng, logw);
    state.c[i] = cells[k].first;
    state.z[i] = cells[k].second;
  }
}

void relabel(ConditionalState& state) {
  const std::size_t M = state.M();
  const auto sizes = state.outer_sizes();
  std::vector<int> outer_map(M, -1);
  std::vector<OuterComponent> reordered;
  reordered.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (sizes[m] > 0) {
      outer_map[m] = int(reordered.size());
      reordered.push_back(std::move(state.components[m]));
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (sizes[m] == 0) reordered.push_back(std::move(state.components[m]));
  }
  for (auto& ci : state.c) ci = outer_map[ci];
  state.components = std::move(reordered);

  const std::size_t K = state.allocated_outer();
  for (std::size_t m = 0; m < K; ++m) {
    auto& comp = state.components[m];
    const auto inner_sizes = state.inner_sizes(m);
    std::vector<int> inner_map(comp.inner.size(), -1);
    std::vector<InnerComponent> inner;
    inner.reserve(comp.inner.size());
    for (std::size_t s = 0; s < comp.inner.size(); ++s) {
      if (inner_sizes[s] > 0) {
        inner_map[s] = int(inner.size());
        inner.push_back(std::move(comp.inner[s]));
      }
    }
    for (std::size_t s = 0; s < comp.inner.size(); ++s) {
      if (inner_sizes[s] == 0) inner.push_back(std::move(comp.inner[s]));
    }
    comp.inner = std::move(inner);
    for (std::size_t i = 0; i < state.n(); ++i) {
      if (state.c[i] == int(m)) state.z[i] = inner_map[state.z[i]];
    }
  }
}

double sample_u_bar(const ConditionalState& state, Rng& rng) {
  double total = 0.0;
  for (const auto& comp : state.components) total += comp.gamma_w;
  return draw_gamma(rng, double(state.n()), total);
}

std::vector<double> num_components_pmf(std::uint64_t K, double psi, double Lambda) {
  if (!(psi > 0.0)) {
    if (K == 0) return {0.0, 1.0};
    return {1.0};
  }
  constexpr std::uint64_t kCap = 1000000;
  const double log_tol = std::log(1e-12);
  const double log_psi = std::log(psi);
  auto log_term = [&](std::uint64_t x) {
    if (K + x == 0) return kNegInf;
    return std::lgamma(double(x + K + 1)) - std::lgamma(double(x + 1)) +
           double(x) * log_psi + log_shifted_poisson_pmf(K + x, Lambda);
  };
  std::vector<double> logw;
  double running = kNegInf;
  double prev = log_term(0);
  logw.push_back(prev);
  running = prev;
  for (std::uint64_t x = 1;; ++x) {
    if (x > kCap) throw NumericError("number-of-components draw: truncation cap reached");
    const double cur = log_term(x);
    logw.push_back(cur);
    if (std::isfinite(cur)) {
      running = std::isfinite(running)
                    ? std::max(running, cur) +
                          std::log1p(std::exp(-std::abs(running - cur)))
                    : cur;
    }
    // the ratio (x + K + 1) Lambda psi / ((x + 1)(x + K)) decreases in x
    if (std::isfinite(prev) && cur < prev) {
      const double ratio = std::exp(cur - prev);
      const double tail = cur + std::log(ratio) - std::log1p(-ratio);
      if (tail < running + log_tol) break;
    }
    prev = cur;
  }
  std::vector<double> p(logw.size());
  for (std::size_t k = 0; k < logw.size(); ++k) p[k] = std::exp(logw[k] - running);
  return p;
}

std::uint64_t sample_num_components(std::uint64_t K, double psi, double Lambda,
                                    Rng& rng) {
  const auto p = num_components_pmf(K, psi, Lambda);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return K + dist(rng);
}

void sample_outer_weights(ConditionalState& state, double u_bar, const Hyperparams& h,
                          Rng& rng) {
  const auto sizes = state.outer_sizes();
  for (std::size_t m = 0; m < state.M(); ++m) {
    state.components[m].gamma_w =
        draw_gamma(rng, h.gamma_M + double(sizes[m]), 1.0 + u_bar);
  }
}

void resize_outer(ConditionalState& state, std::size_t M) {
  if (M < state.allocated_outer()) {
    throw std::logic_error("cannot drop allocated outer components");
  }
  state.components.resize(M);
}

void update_p_star(ConditionalState& state, const DatasetSummary& data,
                   const Hyperparams& h, Rng& rng, std::size_t m) {
  const std::size_t d = data.d();
  std::vector<std::uint64_t> n1(d, 0), n0(d, 0);
  for (std::size_t i = 0; i < state.n(); ++i) {
    if (state.c[i] != int(m)) continue;
    for (std::size_t j = 0; j < d; ++j) {
      n1[j] += data.cell(i, j).positives;
      n0[j] += data.cell(i, j).zeros;
    }
  }
  auto& p = state.components[m].p_star;
  p.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    p[j] = draw_beta(rng, h.alpha + double(n1[j]), h.beta + double(n0[j]));
  }
}

void update_theta_star(ConditionalState& state, const DatasetSummary& data,
                       const Hyperparams& h, Rng& rng, std::size_t m, std::size_t s) {
  const std::size_t d = data.d();
  std::vector<std::uint64_t> excess(d, 0), npos(d, 0);
  for (std::size_t i = 0; i < state.n(); ++i) {
    if (state.c[i] != int(m) || state.z[i] != int(s)) continue;
    for (std::size_t j = 0; j < d; ++j) {
      excess[j] += data.cell(i, j).excess;
      npos[j] += data.cell(i, j).positives;
    }
  }
  auto& ic = state.components[m].inner[s];
  for (std::size_t j = 0; j < d; ++j) {
    ic.theta_star[j] = draw_beta(rng, h.eta + double(excess[j]),
                                 h.lambda + double(ic.r_star[j]) * double(npos[j]));
  }
}

std::vector<double> r_full_conditional(std::span<const std::uint64_t> positives,
                                       double theta, double zeta) {
  std::vector<std::uint64_t> values(positives.begin(), positives.end());
  std::sort(values.begin(), values.end());
  Histogram hist;
  for (std::uint64_t y : values) {
    if (y == 0) throw std::domain_error("r* full conditional takes positive counts");
    if (hist.entries.empty() || hist.entries.back().first != y) {
      hist.entries.emplace_back(y, 0);
    }
    ++hist.entries.back().second;
    ++hist.total;
    hist.excess += y - 1;
  }
  auto p = r_full_conditional_hist(hist, theta, zeta);
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v /= total;
  return p;
}

void update_r_star(ConditionalState& state, const DatasetSummary& data,
                   const Hyperparams& h, Rng& rng, std::size_t m, std::size_t s) {
  auto& ic = state.components[m].inner[s];
  for (std::size_t j = 0; j < data.d(); ++j) {
    const Histogram hist = gather_positives(state, data, m, s, j);
    const auto p = r_full_conditional_hist(hist, ic.theta_star[j], h.zeta);
    std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
    ic.r_star[j] = std::uint32_t(dist(rng) + 1);
  }
}

void sample_inner_weights(OuterComponent& comp, std::span<const std::size_t> sizes,
                          const Hyperparams& h, Rng& rng) {
  for (std::size_t s = 0; s < comp.inner.size(); ++s) {
    const double n_s = s < sizes.size() ? double(sizes[s]) : 0.0;
    comp.inner[s].delta = draw_gamma(rng, h.gamma_S + n_s, 1.0 + comp.u_m);
  }
}

void update_inner_block(ConditionalState& state, const DatasetSummary& data,
                        const Hyperparams& h, Rng& rng, std::size_t m) {
  const std::size_t d = data.d();
  auto& comp = state.components[m];
  auto sizes = state.inner_sizes(m);
  std::size_t n_m = 0, K_m = 0;
  for (std::size_t v : sizes) {
    n_m += v;
    if (v > 0) ++K_m;
  }
  double total_delta = 0.0;
  for (const auto& ic : comp.inner) total_delta += ic.delta;
  comp.u_m = draw_gamma(rng, double(n_m), total_delta);

  const double psi = std::pow(1.0 + comp.u_m, -h.gamma_S);
  const std::size_t S = sample_num_components(K_m, psi, h.Lambda_S, rng);
  if (S < comp.inner.size()) {
    comp.inner.resize(S);
  } else {
    while (comp.inner.size() < S) comp.inner.push_back(inner_from_prior(h, d, rng));
  }
  sizes.resize(S, 0);
  sample_inner_weights(comp, sizes, h, rng);
  for (std::size_t s = 0; s < K_m; ++s) {
    update_r_star(state, data, h, rng, m, s);
    update_theta_star(state, data, h, rng, m, s);
  }
  for (std::size_t s = K_m; s < S; ++s) {
    auto& ic = comp.inner[s];
    for (std::size_t j = 0; j < d; ++j) ic.r_star[j] = draw_geometric(rng, h.zeta);
    for (std::size_t j = 0; j < d; ++j) ic.theta_star[j] = draw_beta(rng, h.eta, h.lambda);
  }
}

void update_unallocated_outer(ConditionalState& state, const Hyperparams& h, Rng& rng,
                              std::size_t d) {
  const std::size_t K = state.allocated_outer();
  for (std::size_t m = K; m < state.M(); ++m) {
    outer_from_prior(state.components[m], h, d, rng);
  }
}

void sweep(ConditionalState& state, const DatasetSummary& data, const Hyperparams& h,
           Rng& rng, bool fixed_outer) {
  sample_allocations(state, data, rng, fixed_outer);
  relabel(state);
  const std::size_t K = state.allocated_outer();
  if (!fixed_outer) {
    state.u_bar = sample_u_bar(state, rng);
    const double psi = std::pow(1.0 + state.u_bar, -h.gamma_M);
    resize_outer(state, sample_num_components(K, psi, h.Lambda_M, rng));
    sample_outer_weights(state, state.u_bar, h, rng);
  }
  for (std::size_t m = 0; m < K; ++m) {
    update_p_star(state, data, h, rng, m);
    update_inner_block(state, data, h, rng, m);
  }
  if (!fixed_outer) update_unallocated_outer(state, h, rng, data.d());
}

double conditional_loglik(const ConditionalState& state, const DatasetSummary& data) {
  double total = 0.0;
  const std::size_t d = data.d();
  for (std::size_t i = 0; i < state.n(); ++i) {
    const auto& comp = state.components[state.c[i]];
    const auto& ic = comp.inner[state.z[i]];
    for (std::size_t j = 0; j < d; ++j) {
      const CellStats& cs = data.cell(i, j);
      const double p = comp.p_star[j];
      total += cs.zeros * std::log1p(-p) + cs.positives * std::log(p);
      if (cs.positives == 0) continue;
      const std::uint32_t r = ic.r_star[j];
      for (std::uint64_t y : data.positives(i, j)) total += log_nb_coefficient(y, r);
      total += double(cs.excess) * std::log(ic.theta_star[j]) +
               double(r) * double(cs.positives) * std::log1p(-ic.theta_star[j]);
    }
  }
  return total;
}

TraceRecord make_conditional_record(const ConditionalState& state,
                                    const DatasetSummary& data, const Hyperparams& h,
                                    std::uint64_t iteration) {
  TraceRecord rec;
  rec.iteration = iteration;
  rec.M = state.M();
  rec.K = state.allocated_outer();
  rec.c = state.c;
  rec.z = state.z;
  rec.loglik = conditional_loglik(state, data);
  rec.log_marginal = log_marginal_likelihood(data, h, state.c, state.z);
  rec.u_bar = state.u_bar;
  for (std::size_t m = 0; m < rec.K; ++m) {
    const auto& comp = state.components[m];
    rec.S.push_back(comp.inner.size());
    rec.K_inner.push_back(state.allocated_inner(m));
    rec.u.push_back(comp.u_m);
    OuterDraw od;
    od.p_star = comp.p_star;
    double total_delta = 0.0;
    for (const auto& ic : comp.inner) total_delta += ic.delta;
    for (const auto& ic : comp.inner) {
      od.inner.push_back({ic.delta / total_delta, ic.r_star, ic.theta_star});
    }
    rec.components.push_back(std::move(od));
  }
  return rec;
}

ChainTrace run_conditional_chain(const CountDataset& data, const Hyperparams& h,
                                 const ChainConfig& config, const RunControl& control) {
  config.check();
  const auto report = validate(h);
  if (!report.ok()) throw std::invalid_argument("invalid hyperparameters: " + report.message());
  const DatasetSummary summary(data);
  Rng rng(config.seed);
  ConditionalState state = initial_conditional_state(summary, h, rng, config.fixed_outer);
  const bool fixed = !config.fixed_outer.empty();

  ChainTrace trace;
  trace.algorithm = Algorithm::conditional;
  trace.n = data.n();
  trace.d = data.d();
  for (std::uint64_t it = 1; it <= config.iters; ++it) {
    if (control.stop && control.stop->load()) break;
    sweep(state, summary, h, rng, fixed);
    if (!config.keeps(it)) continue;
    TraceRecord rec = make_conditional_record(state, summary, h, it);
    if (control.sink) control.sink(rec);
    if (control.keep_records) trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace hurdlemix

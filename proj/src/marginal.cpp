#include "hurdlemix/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hurdlemix/errors.hpp"
#include "hurdlemix/latent.hpp"

namespace hurdlemix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(std::min(a, b) - mx));
}

// log of (Lambda psi + K + 1)/(Lambda psi + K) * Lambda gamma psi, the weight
// of opening a new cluster at a level that currently has K clusters.
double log_new_cluster_factor(double u, std::size_t K, double Lambda, double gamma) {
  const double log_psi = -gamma * std::log1p(u);
  const double lp = Lambda * std::exp(log_psi);
  return std::log(lp + double(K) + 1.0) - std::log(lp + double(K)) + std::log(Lambda) +
         std::log(gamma) + log_psi;
}

}  // namespace

double log_marg_bern(std::uint64_t n1, std::uint64_t n0, double alpha, double beta) {
  if (n1 + n0 == 0) return 0.0;
  return log_beta_fn(alpha + double(n1), beta + double(n0)) - log_beta_fn(alpha, beta);
}

void PositiveMultiset::add(std::uint64_t y) {
  if (y == 0) throw std::domain_error("positive multiset takes counts >= 1");
  auto it = std::lower_bound(entries_.begin(), entries_.end(), y,
                             [](const auto& e, std::uint64_t v) { return e.first < v; });
  if (it != entries_.end() && it->first == y) {
    ++it->second;
  } else {
    entries_.insert(it, {y, 1});
  }
  ++size_;
  excess_ += y - 1;
}

void PositiveMultiset::remove(std::uint64_t y) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), y,
                             [](const auto& e, std::uint64_t v) { return e.first < v; });
  if (it == entries_.end() || it->first != y) {
    throw std::logic_error("removing a count that is not in the multiset");
  }
  if (--it->second == 0) entries_.erase(it);
  --size_;
  excess_ -= y - 1;
}

double LgammaTable::lookup(std::vector<double>& table, double offset, std::uint64_t x) {
  while (table.size() <= x) table.push_back(std::lgamma(offset + double(table.size())));
  return table[x];
}

namespace {

struct DirectLgamma {
  double lambda, eta_lambda;
  double lg_lambda(std::uint64_t x) const { return std::lgamma(lambda + double(x)); }
  double lg_eta_lambda(std::uint64_t x) const { return std::lgamma(eta_lambda + double(x)); }
};

// Truncated r-sum given coef(r) = sum_y log C(y + r - 2, y - 1) and lgamma
// evaluations at lambda + x and eta + lambda + x for integer x.
template <class Coef, class Lg>
double truncated_nb_sum(std::uint64_t N, std::uint64_t S, double eta, double lambda,
                        double zeta, Coef&& coef, const Lg& lg) {
  const double a = eta + double(S);
  const double lga = std::lgamma(a);
  const double lb0 = log_beta_fn(eta, lambda);
  const double log_step = std::log1p(-zeta);
  const double log_zeta = std::log(zeta);
  auto term = [&](std::uint64_t r) {
    return lga + lg.lg_lambda(r * N) - lg.lg_eta_lambda(S + r * N) - lb0 + coef(r) +
           double(r - 1) * log_step + log_zeta;
  };
  constexpr std::uint64_t kCap = 100000;
  const double log_tol = std::log(1e-10);
  double prev = term(1);
  double running = prev;
  for (std::uint64_t r = 2;; ++r) {
    if (r > kCap) throw NumericError("M_NB: truncation cap 1e5 reached before the tail bound");
    const double cur = term(r);
    running = log_add(running, cur);
    if (cur < prev) {
      // far out the term ratio approaches 1 - zeta from below
      const double ratio = std::max(std::exp(cur - prev), 1.0 - zeta);
      const double tail = cur + std::log(ratio) - std::log1p(-ratio);
      if (tail < running + log_tol) break;
    }
    prev = cur;
  }
  return running;
}

std::uint64_t excess_of(const PositiveMultiset& base, std::span<const std::uint64_t> extra) {
  std::uint64_t S = base.excess();
  for (std::uint64_t y : extra) {
    if (y == 0) throw std::domain_error("M_NB takes positive counts");
    S += y - 1;
  }
  return S;
}

double base_coef(const PositiveMultiset& base, std::uint64_t r) {
  double v = 0.0;
  for (const auto& [y, k] : base.entries()) v += double(k) * log_nb_coefficient(y, r);
  return v;
}

}  // namespace

double log_marg_nb(const PositiveMultiset& base, std::span<const std::uint64_t> extra,
                   double eta, double lambda, double zeta, const MnbMode& mode, Rng* rng) {
  const std::uint64_t N = base.size() + extra.size();
  if (N == 0) return 0.0;
  const std::uint64_t S = excess_of(base, extra);
  auto coef = [&](std::uint64_t r) {
    double v = base_coef(base, r);
    for (std::uint64_t y : extra) v += log_nb_coefficient(y, r);
    return v;
  };

  if (mode.kind == MnbMode::Kind::monte_carlo) {
    if (rng == nullptr) throw std::invalid_argument("Monte Carlo M_NB needs an rng");
    if (mode.nsamples == 0) throw std::invalid_argument("Monte Carlo M_NB needs samples");
    const double a = eta + double(S);
    const double lb0 = log_beta_fn(eta, lambda);
    double acc = kNegInf;
    for (std::size_t k = 0; k < mode.nsamples; ++k) {
      const std::uint64_t r = draw_geometric(*rng, zeta);
      const double b = lambda + double(r) * double(N);
      acc = log_add(acc, log_beta_fn(a, b) - lb0 + coef(r));
    }
    return acc - std::log(double(mode.nsamples));
  }
  return truncated_nb_sum(N, S, eta, lambda, zeta, coef, DirectLgamma{lambda, eta + lambda});
}

double log_marg_nb(std::span<const std::uint64_t> positives, double eta, double lambda,
                   double zeta, const MnbMode& mode, Rng* rng) {
  static const PositiveMultiset empty;
  return log_marg_nb(empty, positives, eta, lambda, zeta, mode, rng);
}

ClusterSuffStats ClusterSuffStats::build(const DatasetSummary& data,
                                         std::span<const int> c, std::span<const int> z) {
  ClusterSuffStats stats;
  const std::size_t d = data.d();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t m = std::size_t(c[i]), s = std::size_t(z[i]);
    if (stats.clusters.size() <= m) {
      stats.clusters.resize(m + 1);
    }
    auto& oc = stats.clusters[m];
    if (oc.inner.size() <= s) oc.inner.resize(s + 1);
  }
  for (auto& oc : stats.clusters) {
    oc.n1.assign(d, 0);
    oc.n0.assign(d, 0);
    for (auto& ic : oc.inner) ic.positives.assign(d, {});
  }
  for (std::size_t i = 0; i < c.size(); ++i) stats.add_subject(data, i, c[i], z[i]);
  return stats;
}

void ClusterSuffStats::add_subject(const DatasetSummary& data, std::size_t i,
                                   std::size_t m, std::size_t s) {
  auto& oc = clusters.at(m);
  auto& ic = oc.inner.at(s);
  ++oc.size;
  ++ic.size;
  for (std::size_t j = 0; j < data.d(); ++j) {
    oc.n1[j] += data.cell(i, j).positives;
    oc.n0[j] += data.cell(i, j).zeros;
    ic.positives[j].add(data.positives(i, j));
  }
}

void ClusterSuffStats::remove_subject(const DatasetSummary& data, std::size_t i,
                                      std::size_t m, std::size_t s) {
  auto& oc = clusters.at(m);
  auto& ic = oc.inner.at(s);
  --oc.size;
  --ic.size;
  for (std::size_t j = 0; j < data.d(); ++j) {
    oc.n1[j] -= data.cell(i, j).positives;
    oc.n0[j] -= data.cell(i, j).zeros;
    ic.positives[j].remove(data.positives(i, j));
  }
}

double log_marginal_likelihood(const DatasetSummary& data, const Hyperparams& h,
                               std::span<const int> c, std::span<const int> z,
                               const MnbMode& mode, Rng* rng) {
  const auto stats = ClusterSuffStats::build(data, c, z);
  double total = 0.0;
  for (const auto& oc : stats.clusters) {
    for (std::size_t j = 0; j < data.d(); ++j) {
      total += log_marg_bern(oc.n1[j], oc.n0[j], h.alpha, h.beta);
      for (const auto& ic : oc.inner) {
        total += log_marg_nb(ic.positives[j], {}, h.eta, h.lambda, h.zeta, mode, rng);
      }
    }
  }
  return total;
}

MarginalState initial_marginal_state(std::size_t n, const Hyperparams& h, Rng& rng,
                                     const std::vector<int>& fixed_outer) {
  MarginalState state;
  std::vector<int> raw(n);
  if (!fixed_outer.empty()) {
    if (fixed_outer.size() != n) {
      throw std::invalid_argument("fixed outer partition has wrong length");
    }
    raw = fixed_outer;
  } else {
    const std::size_t groups =
        std::min<std::size_t>(n, std::size_t(std::ceil(h.Lambda_M)) + 1);
    std::uniform_int_distribution<int> pick(0, int(groups) - 1);
    for (auto& v : raw) v = pick(rng);
  }
  // contiguous labels in order of first appearance
  std::vector<int> map(*std::max_element(raw.begin(), raw.end()) + 1, -1);
  int next = 0;
  state.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (map[raw[i]] < 0) map[raw[i]] = next++;
    state.c[i] = map[raw[i]];
  }
  if (!fixed_outer.empty() && state.c != fixed_outer) {
    throw std::invalid_argument("fixed outer partition must use every label 0..K-1");
  }
  state.z.assign(n, 0);
  state.u_bar = 1.0;
  state.u.assign(std::size_t(next), 1.0);
  return state;
}

MarginalSampler::MarginalSampler(const DatasetSummary& data, const Hyperparams& h,
                                 MnbMode mode, MarginalState state, Rng& rng)
    : data_(data), h_(h), mode_(mode), state_(std::move(state)), mc_rng_(&rng) {
  const std::size_t n = data.n(), d = data.d();
  if (state_.c.size() != n || state_.z.size() != n) {
    throw std::invalid_argument("marginal state does not match the dataset");
  }
  stats_ = ClusterSuffStats::build(data, state_.c, state_.z);
  if (state_.u.size() != stats_.clusters.size()) {
    throw std::invalid_argument("marginal state needs one latent per outer cluster");
  }
  for (const auto& oc : stats_.clusters) {
    for (const auto& ic : oc.inner) {
      if (oc.size == 0 || ic.size == 0) {
        throw std::invalid_argument("marginal state labels must be contiguous");
      }
    }
  }
  attached_.assign(n, true);
  bern_cache_.resize(stats_.clusters.size());
  nb_cache_.resize(stats_.clusters.size());
  for (std::size_t m = 0; m < stats_.clusters.size(); ++m) {
    refresh_outer_cache(m);
    nb_cache_[m].resize(stats_.clusters[m].inner.size());
    for (std::size_t s = 0; s < stats_.clusters[m].inner.size(); ++s) {
      refresh_inner_cache(m, s);
    }
  }
  single_bern_.resize(n * d);
  single_nb_.resize(n * d);
  single_coef_.resize(n * d);
  lgamma_.lambda = h.lambda;
  lgamma_.eta_lambda = h.eta + h.lambda;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const CellStats& cs = data.cell(i, j);
      single_bern_[i * d + j] = log_marg_bern(cs.positives, cs.zeros, h.alpha, h.beta);
      single_nb_[i * d + j] =
          log_marg_nb(data.positives(i, j), h.eta, h.lambda, h.zeta, mode_, mc_rng_);
    }
  }
}

void MarginalSampler::refresh_outer_cache(std::size_t m) {
  const auto& oc = stats_.clusters[m];
  bern_cache_[m].resize(data_.d());
  for (std::size_t j = 0; j < data_.d(); ++j) {
    bern_cache_[m][j] = log_marg_bern(oc.n1[j], oc.n0[j], h_.alpha, h_.beta);
  }
}

void MarginalSampler::refresh_inner_cache(std::size_t m, std::size_t s) {
  const auto& ic = stats_.clusters[m].inner[s];
  auto& cache = nb_cache_[m][s];
  cache.resize(data_.d());
  for (std::size_t j = 0; j < data_.d(); ++j) {
    cache[j].value =
        log_marg_nb(ic.positives[j], {}, h_.eta, h_.lambda, h_.zeta, mode_, mc_rng_);
    cache[j].coef.clear();
  }
}

double MarginalSampler::outer_bern(std::size_t m, std::size_t j) const {
  return bern_cache_[m][j];
}

double MarginalSampler::inner_nb(std::size_t m, std::size_t s, std::size_t j) const {
  return nb_cache_[m][s][j].value;
}

double MarginalSampler::nb_with(std::size_t m, std::size_t s, std::size_t j,
                                std::size_t i) const {
  const PositiveMultiset& base = stats_.clusters[m].inner[s].positives[j];
  const auto extra = data_.positives(i, j);
  if (mode_.kind == MnbMode::Kind::monte_carlo) {
    return log_marg_nb(base, extra, h_.eta, h_.lambda, h_.zeta, mode_, mc_rng_);
  }
  const std::uint64_t N = base.size() + extra.size();
  if (N == 0) return 0.0;
  std::vector<double>& cached = nb_cache_[m][s][j].coef;
  std::vector<double>& single = single_coef_[i * data_.d() + j];
  auto coef = [&](std::uint64_t r) {
    while (cached.size() < r) cached.push_back(base_coef(base, cached.size() + 1));
    while (single.size() < r) {
      double v = 0.0;
      for (std::uint64_t y : extra) v += log_nb_coefficient(y, single.size() + 1);
      single.push_back(v);
    }
    return cached[r - 1] + single[r - 1];
  };
  return truncated_nb_sum(N, excess_of(base, extra), h_.eta, h_.lambda, h_.zeta, coef,
                          lgamma_);
}

void MarginalSampler::detach(std::size_t i) { detach(i, false); }

void MarginalSampler::detach(std::size_t i, bool keep_outer) {
  if (!attached_[i]) throw std::logic_error("subject is already detached");
  const std::size_t m = std::size_t(state_.c[i]), s = std::size_t(state_.z[i]);
  stats_.remove_subject(data_, i, m, s);
  attached_[i] = false;
  state_.c[i] = -1;
  state_.z[i] = -1;
  const std::size_t n = data_.n();

  auto& oc = stats_.clusters[m];
  if (oc.inner[s].size == 0) {
    const std::size_t last = oc.inner.size() - 1;
    if (s != last) {
      oc.inner[s] = std::move(oc.inner[last]);
      nb_cache_[m][s] = std::move(nb_cache_[m][last]);
      for (std::size_t l = 0; l < n; ++l) {
        if (state_.c[l] == int(m) && state_.z[l] == int(last)) state_.z[l] = int(s);
      }
    }
    oc.inner.pop_back();
    nb_cache_[m].pop_back();
  } else {
    refresh_inner_cache(m, s);
  }

  if (oc.size == 0 && !keep_outer) {
    const std::size_t last = stats_.clusters.size() - 1;
    if (m != last) {
      stats_.clusters[m] = std::move(stats_.clusters[last]);
      bern_cache_[m] = std::move(bern_cache_[last]);
      nb_cache_[m] = std::move(nb_cache_[last]);
      state_.u[m] = state_.u[last];
      for (std::size_t l = 0; l < n; ++l) {
        if (state_.c[l] == int(last)) state_.c[l] = int(m);
      }
    }
    stats_.clusters.pop_back();
    bern_cache_.pop_back();
    nb_cache_.pop_back();
    state_.u.pop_back();
  } else {
    refresh_outer_cache(m);
  }
  pending_.reset();
}

std::vector<double> MarginalSampler::inner_table(std::size_t i, std::size_t m) const {
  const std::size_t d = data_.d();
  const auto& oc = stats_.clusters[m];
  const std::size_t Km = oc.inner.size();
  std::vector<double> logw(Km + 1);
  for (std::size_t s = 0; s < Km; ++s) {
    double v = std::log(double(oc.inner[s].size) + h_.gamma_S);
    for (std::size_t j = 0; j < d; ++j) v += nb_with(m, s, j, i) - inner_nb(m, s, j);
    logw[s] = v;
  }
  double v = log_new_cluster_factor(state_.u[m], Km, h_.Lambda_S, h_.gamma_S);
  for (std::size_t j = 0; j < d; ++j) v += single_nb_[i * d + j];
  logw[Km] = v;
  return logw;
}

AllocationTable MarginalSampler::allocation_table(std::size_t i) const {
  if (attached_[i]) throw std::logic_error("allocation table needs a detached subject");
  const std::size_t d = data_.d();
  const std::size_t K = stats_.clusters.size();
  AllocationTable table;
  table.outer.resize(K + 1);
  table.inner.resize(K);
  for (std::size_t m = 0; m < K; ++m) {
    const auto& oc = stats_.clusters[m];
    const double nm = double(oc.size);
    const double um = state_.u[m];
    double base = std::log(nm + h_.gamma_M);
    // ratio of the U_m joint factor u^(n_m - 1) / (Gamma(n_m) (1 + u)^n_m) when
    // the cluster grows by one subject
    base += std::log(um) - std::log(nm) - std::log1p(um);
    for (std::size_t j = 0; j < d; ++j) {
      const CellStats& cs = data_.cell(i, j);
      base += log_marg_bern(oc.n1[j] + cs.positives, oc.n0[j] + cs.zeros, h_.alpha,
                            h_.beta) -
              outer_bern(m, j);
    }
    table.inner[m] = inner_table(i, m);
    table.outer[m] = base + log_sum_exp(table.inner[m]);
  }
  double v = log_new_cluster_factor(state_.u_bar, K, h_.Lambda_M, h_.gamma_M);
  for (std::size_t j = 0; j < d; ++j) v += single_bern_[i * d + j] + single_nb_[i * d + j];
  table.outer[K] = v;
  return table;
}

void MarginalSampler::attach(std::size_t i, std::size_t m, std::size_t s) {
  const std::size_t d = data_.d();
  if (m == stats_.clusters.size()) {
    OuterClusterStats oc;
    oc.n1.assign(d, 0);
    oc.n0.assign(d, 0);
    stats_.clusters.push_back(std::move(oc));
    bern_cache_.emplace_back();
    nb_cache_.emplace_back();
  }
  auto& oc = stats_.clusters[m];
  if (s == oc.inner.size()) {
    InnerClusterStats ic;
    ic.positives.assign(d, {});
    oc.inner.push_back(std::move(ic));
    nb_cache_[m].emplace_back();
  }
  stats_.add_subject(data_, i, m, s);
  refresh_outer_cache(m);
  refresh_inner_cache(m, s);
  state_.c[i] = int(m);
  state_.z[i] = int(s);
  attached_[i] = true;
}

void MarginalSampler::sample_c_i(std::size_t i, Rng& rng) {
  AllocationTable table = allocation_table(i);
  const std::size_t K = stats_.clusters.size();
  const std::size_t m = draw_log_categorical(rng, table.outer);
  if (m == K) {
    state_.u.push_back(draw_singleton_latent(h_.Lambda_S, h_.gamma_S, rng));
    attach(i, K, 0);
    return;
  }
  state_.c[i] = int(m);
  pending_ = Pending{i, m, std::move(table.inner[m])};
}

void MarginalSampler::sample_z_i(std::size_t i, Rng& rng) {
  if (attached_[i] || state_.c[i] < 0) {
    throw std::logic_error("z_i update needs a detached subject with c_i set");
  }
  const std::size_t m = std::size_t(state_.c[i]);
  std::vector<double> logw;
  if (pending_ && pending_->subject == i && pending_->outer == m) {
    logw = std::move(pending_->inner);
  } else {
    logw = inner_table(i, m);
  }
  pending_.reset();
  const std::size_t Km = stats_.clusters[m].inner.size();
  const std::size_t s = draw_log_categorical(rng, logw);
  attach(i, m, s);
  if (s == Km) resample_u(m, rng);
}

void MarginalSampler::resample_u(std::size_t m, Rng& rng) {
  const auto& oc = stats_.clusters[m];
  const std::uint64_t nm = oc.size, Km = oc.inner.size();
  const double Lambda = h_.Lambda_S, gamma = h_.gamma_S;
  state_.u[m] = slice_sample_positive(
      state_.u[m],
      [&](double u) { return log_latent_density(u, Lambda, gamma, nm, Km); }, rng);
}

void MarginalSampler::sample_latents(Rng& rng) {
  const std::uint64_t n = data_.n(), K = stats_.clusters.size();
  const double Lambda = h_.Lambda_M, gamma = h_.gamma_M;
  state_.u_bar = slice_sample_positive(
      state_.u_bar,
      [&](double u) { return log_latent_density(u, Lambda, gamma, n, K); }, rng);
  for (std::size_t m = 0; m < K; ++m) resample_u(m, rng);
}

void MarginalSampler::sweep(Rng& rng, bool fixed_outer) {
  for (std::size_t i = 0; i < data_.n(); ++i) {
    if (fixed_outer) {
      const int m = state_.c[i];
      detach(i, true);
      state_.c[i] = m;
      sample_z_i(i, rng);
    } else {
      detach(i);
      sample_c_i(i, rng);
      if (!attached_[i]) sample_z_i(i, rng);
    }
  }
  sample_latents(rng);
}

double MarginalSampler::log_marginal() const {
  double total = 0.0;
  for (std::size_t m = 0; m < stats_.clusters.size(); ++m) {
    for (std::size_t j = 0; j < data_.d(); ++j) {
      total += bern_cache_[m][j];
      for (std::size_t s = 0; s < nb_cache_[m].size(); ++s) total += nb_cache_[m][s][j].value;
    }
  }
  return total;
}

TraceRecord make_marginal_record(const MarginalSampler& sampler, std::uint64_t iteration) {
  const auto& st = sampler.state();
  const auto& stats = sampler.stats();
  TraceRecord rec;
  rec.iteration = iteration;
  rec.K = stats.clusters.size();
  for (const auto& oc : stats.clusters) rec.K_inner.push_back(oc.inner.size());
  rec.c = st.c;
  rec.z = st.z;
  rec.log_marginal = sampler.log_marginal();
  rec.u_bar = st.u_bar;
  rec.u = st.u;
  return rec;
}

ChainTrace run_marginal_chain(const CountDataset& data, const Hyperparams& h,
                              const ChainConfig& config, const MnbMode& mode,
                              const RunControl& control) {
  config.check();
  const auto report = validate(h);
  if (!report.ok()) throw std::invalid_argument("invalid hyperparameters: " + report.message());
  const DatasetSummary summary(data);
  Rng rng(config.seed);
  MarginalSampler sampler(summary, h, mode,
                          initial_marginal_state(data.n(), h, rng, config.fixed_outer), rng);
  const bool fixed = !config.fixed_outer.empty();

  ChainTrace trace;
  trace.algorithm = Algorithm::marginal;
  trace.n = data.n();
  trace.d = data.d();
  for (std::uint64_t it = 1; it <= config.iters; ++it) {
    if (control.stop && control.stop->load()) break;
    sampler.sweep(rng, fixed);
    if (!config.keeps(it)) continue;
    TraceRecord rec = make_marginal_record(sampler, it);
    if (control.sink) control.sink(rec);
    if (control.keep_records) trace.records.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace hurdlemix

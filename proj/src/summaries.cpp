#include "hurdlemix/summaries.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "hurdlemix/model.hpp"

namespace hurdlemix {

namespace {

void require_records(std::span<const TraceRecord> records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

Partition canonicalize(std::span<const int> labels) {
  Partition out(labels.size());
  std::map<int, int> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = seen.emplace(labels[i], int(seen.size()));
    out[i] = it->second;
  }
  return out;
}

Partition record_partition(const TraceRecord& rec, Level level) {
  if (level == Level::outer) return canonicalize(rec.c);
  std::vector<int> joint(rec.c.size());
  std::map<std::pair<int, int>, int> seen;
  for (std::size_t i = 0; i < rec.c.size(); ++i) {
    auto [it, fresh] = seen.emplace(std::pair{rec.c[i], rec.z[i]}, int(seen.size()));
    joint[i] = it->second;
  }
  return joint;
}

CoClusteringMatrix coclustering(std::span<const TraceRecord> records, Level level) {
  require_records(records);
  const std::size_t n = records.front().c.size();
  CoClusteringMatrix out{n, level, std::vector<double>(n * n, 0.0)};
  for (const auto& rec : records) {
    if (rec.c.size() != n) throw std::invalid_argument("records disagree on n");
    const Partition p = record_partition(rec, level);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = i; l < n; ++l) {
        if (p[i] == p[l]) out.psm[i * n + l] += 1.0;
      }
    }
  }
  const double w = 1.0 / double(records.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = i; l < n; ++l) {
      out.psm[i * n + l] *= w;
      out.psm[l * n + i] = out.psm[i * n + l];
    }
  }
  return out;
}

std::vector<Partition> visited_partitions(std::span<const TraceRecord> records, Level level) {
  std::vector<Partition> out;
  std::set<Partition> seen;
  for (const auto& rec : records) {
    Partition p = record_partition(rec, level);
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

double binder_loss(const CoClusteringMatrix& psm, std::span<const int> partition) {
  if (partition.size() != psm.n) throw std::invalid_argument("partition size != psm size");
  double loss = 0.0;
  for (std::size_t i = 0; i < psm.n; ++i) {
    for (std::size_t l = i + 1; l < psm.n; ++l) {
      const double same = partition[i] == partition[l] ? 1.0 : 0.0;
      loss += std::abs(same - psm(i, l));
    }
  }
  return loss;
}

BinderResult binder_estimate(const CoClusteringMatrix& psm,
                             std::span<const Partition> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidate partitions");
  BinderResult best;
  best.loss = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double loss = binder_loss(psm, candidates[k]);
    if (loss < best.loss) {
      best = {candidates[k], loss, k};
    }
  }
  return best;
}

BinderResult binder_estimate(std::span<const TraceRecord> records, Level level) {
  const auto psm = coclustering(records, level);
  const auto candidates = visited_partitions(records, level);
  return binder_estimate(psm, candidates);
}

BinderResult binder_exhaustive(const CoClusteringMatrix& psm) {
  const std::size_t n = psm.n;
  if (n > 10) throw std::invalid_argument("exhaustive Binder search is limited to n <= 10");
  BinderResult best;
  best.loss = std::numeric_limits<double>::infinity();
  if (n == 0) return {{}, 0.0, 0};
  // restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[0..i-1])
  Partition a(n, 0);
  std::vector<int> mx(n, 0);
  std::size_t index = 0;
  while (true) {
    const double loss = binder_loss(psm, a);
    if (loss < best.loss) best = {a, loss, index};
    ++index;
    std::size_t i = n - 1;
    while (i > 0 && a[i] == mx[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    mx[i] = std::max(mx[i - 1], a[i]);
    for (std::size_t k = i + 1; k < n; ++k) {
      a[k] = 0;
      mx[k] = mx[i];
    }
  }
  return best;
}

NestedPartition nested_binder_estimate(std::span<const TraceRecord> records) {
  require_records(records);
  NestedPartition out;
  out.outer = binder_estimate(records, Level::outer).partition;
  const auto psm_inner = coclustering(records, Level::inner);
  const std::size_t n = out.outer.size();
  out.inner.assign(n, 0);
  const int K = 1 + *std::max_element(out.outer.begin(), out.outer.end());
  for (int m = 0; m < K; ++m) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.outer[i] == m) members.push_back(i);
    }
    CoClusteringMatrix sub{members.size(), Level::inner,
                           std::vector<double>(members.size() * members.size())};
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = 0; b < members.size(); ++b) {
        sub.psm[a * members.size() + b] = psm_inner(members[a], members[b]);
      }
    }
    std::vector<Partition> candidates;
    std::set<Partition> seen;
    for (const auto& rec : records) {
      const Partition joint = record_partition(rec, Level::inner);
      std::vector<int> restricted;
      for (std::size_t i : members) restricted.push_back(joint[i]);
      Partition p = canonicalize(restricted);
      if (seen.insert(p).second) candidates.push_back(std::move(p));
    }
    const auto best = binder_estimate(sub, candidates);
    for (std::size_t a = 0; a < members.size(); ++a) out.inner[members[a]] = best.partition[a];
  }
  return out;
}

CountPosterior cluster_count_posterior(std::span<const TraceRecord> records) {
  require_records(records);
  CountPosterior out;
  const double w = 1.0 / double(records.size());
  for (const auto& rec : records) {
    out.K[rec.K] += w;
    if (rec.M > 0) out.M[rec.M] += w;
    out.total_inner[rec.total_inner()] += w;
  }
  return out;
}

PmfBand cluster_pmf_estimate(std::span<const TraceRecord> records, std::size_t m,
                             std::size_t j, std::span<const std::uint64_t> y_grid) {
  require_records(records);
  std::vector<std::vector<double>> draws(y_grid.size());
  for (const auto& rec : records) {
    if (m >= rec.components.size()) continue;
    const auto& od = rec.components[m];
    for (std::size_t k = 0; k < y_grid.size(); ++k) {
      double v = 0.0;
      for (const auto& ic : od.inner) {
        if (j >= ic.r_star.size()) throw std::invalid_argument("process index out of range");
        v += ic.weight * std::exp(log_shifted_nb_pmf(y_grid[k], ic.r_star[j], ic.theta_star[j]));
      }
      draws[k].push_back(v);
    }
  }
  if (y_grid.empty() || draws.front().empty()) {
    bool present = false;
    for (const auto& rec : records) present |= m < rec.components.size();
    if (!present) throw std::invalid_argument("outer cluster absent from trace");
  }
  PmfBand band;
  band.y.assign(y_grid.begin(), y_grid.end());
  for (const auto& v : draws) {
    double s = 0.0;
    for (double x : v) s += x;
    band.mean.push_back(s / double(v.size()));
    band.lower.push_back(quantile(v, 0.025));
    band.upper.push_back(quantile(v, 0.975));
  }
  return band;
}

std::vector<std::size_t> average_linkage_order(const CoClusteringMatrix& psm) {
  const std::size_t n = psm.n;
  std::vector<std::vector<std::size_t>> leaves(n);
  for (std::size_t i = 0; i < n; ++i) leaves[i] = {i};
  // dist between active clusters, kept as a full matrix
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n * n; ++i) dist[i] = 1.0 - psm.psm[i];
  std::vector<bool> active(n, true);
  for (std::size_t step = 1; step < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (active[b] && dist[a * n + b] < best) {
          best = dist[a * n + b];
          ba = a;
          bb = b;
        }
      }
    }
    const double na = double(leaves[ba].size()), nb = double(leaves[bb].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == ba || k == bb) continue;
      const double v = (na * dist[ba * n + k] + nb * dist[bb * n + k]) / (na + nb);
      dist[ba * n + k] = dist[k * n + ba] = v;
    }
    leaves[ba].insert(leaves[ba].end(), leaves[bb].begin(), leaves[bb].end());
    leaves[bb].clear();
    active[bb] = false;
  }
  return n == 0 ? std::vector<std::size_t>{} : leaves[0];
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("partitions differ in length");
  const std::size_t n = a.size();
  const Partition ca = canonicalize(a), cb = canonicalize(b);
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    table[{ca[i], cb[i]}] += 1.0;
    ra[ca[i]] += 1.0;
    rb[cb[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : table) index += choose2(v);
  for (const auto& [k, v] : ra) sa += choose2(v);
  for (const auto& [k, v] : rb) sb += choose2(v);
  const double expected = sa * sb / choose2(double(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace hurdlemix

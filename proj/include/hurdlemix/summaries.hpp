#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hurdlemix/trace.hpp"

namespace hurdlemix {

using Partition = std::vector<int>;

enum class Level { outer, inner };

// Pairwise posterior co-clustering frequencies, row-major n x n. At the inner
// level two subjects are together when they share both the outer and the
// inner label.
struct CoClusteringMatrix {
  std::size_t n = 0;
  Level level = Level::outer;
  std::vector<double> psm;

  double operator()(std::size_t i, std::size_t l) const { return psm[i * n + l]; }
};

CoClusteringMatrix coclustering(std::span<const TraceRecord> records, Level level);

// Relabels by order of first appearance, starting at 0.
Partition canonicalize(std::span<const int> labels);

// Partition of the record at the given level (inner: joint outer/inner label).
Partition record_partition(const TraceRecord& rec, Level level);

// Distinct canonical partitions in order of first appearance.
std::vector<Partition> visited_partitions(std::span<const TraceRecord> records, Level level);

// sum_{i<l} |1{same cluster} - psm(i, l)|.
double binder_loss(const CoClusteringMatrix& psm, std::span<const int> partition);

struct BinderResult {
  Partition partition;
  double loss = 0.0;
  std::size_t index = 0;  // position among the candidates
};

// Candidate with the smallest loss; the first one wins ties.
BinderResult binder_estimate(const CoClusteringMatrix& psm,
                             std::span<const Partition> candidates);
BinderResult binder_estimate(std::span<const TraceRecord> records, Level level);

// Minimum over every set partition of {0..n-1}; n <= 10.
BinderResult binder_exhaustive(const CoClusteringMatrix& psm);

// Outer Binder estimate, then within each outer block the inner partition
// minimizing the inner-level loss among the visited restrictions to that block.
struct NestedPartition {
  Partition outer;
  Partition inner;  // labels restart at 0 inside each outer block
};
NestedPartition nested_binder_estimate(std::span<const TraceRecord> records);

using Pmf = std::map<std::size_t, double>;

struct CountPosterior {
  Pmf K;
  Pmf M;            // empty for marginal traces
  Pmf total_inner;  // sum_m K_m
};

CountPosterior cluster_count_posterior(std::span<const TraceRecord> records);

// Posterior of y -> sum_s q_ms g(y | r*_msj, theta*_msj) for outer cluster m
// and process j, over the records that contain m.
struct PmfBand {
  std::vector<std::uint64_t> y;
  std::vector<double> mean;
  std::vector<double> lower;  // 2.5%
  std::vector<double> upper;  // 97.5%
};

PmfBand cluster_pmf_estimate(std::span<const TraceRecord> records, std::size_t m,
                             std::size_t j, std::span<const std::uint64_t> y_grid);

// Leaf order of average-linkage agglomerative clustering on 1 - psm.
std::vector<std::size_t> average_linkage_order(const CoClusteringMatrix& psm);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace hurdlemix

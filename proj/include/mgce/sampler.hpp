#pragma once

#include <numeric>
#include <vector>

#include "mgce/dbscan.hpp"
#include "mgce/error.hpp"
#include "mgce/rng.hpp"

namespace mgce {

// Identity-balanced mini-batch: min(P, C) distinct clusters drawn uniformly
// without replacement, K member ids from each (without replacement when the
// cluster has at least K members, with replacement otherwise). Noise points
// are never sampled. Duplicate ids from the with-replacement path are kept;
// the caller deduplicates before memory updates.
inline std::vector<Index> pk_sample(const ClusterLabeling& labeling, int p, int k, Rng& rng) {
  if (p < 1 || k < 1) fail("config_invalid", "pk_sample: P and K must be positive");
  if (labeling.num_clusters == 0) fail("no_clusters", "pk_sample: labeling has no clusters");
  const auto members = labeling.members();

  std::vector<Index> cluster_ids(members.size());
  std::iota(cluster_ids.begin(), cluster_ids.end(), Index(0));
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(p), members.size());
  rng.shuffle_prefix(cluster_ids, take);

  std::vector<Index> batch;
  batch.reserve(take * static_cast<std::size_t>(k));
  for (std::size_t c = 0; c < take; ++c) {
    const auto& mem = members[static_cast<std::size_t>(cluster_ids[c])];
    if (mem.size() >= static_cast<std::size_t>(k)) {
      std::vector<Index> pool = mem;
      rng.shuffle_prefix(pool, static_cast<std::size_t>(k));
      batch.insert(batch.end(), pool.begin(), pool.begin() + k);
    } else {
      for (int z = 0; z < k; ++z) batch.push_back(mem[rng.next_below(mem.size())]);
    }
  }
  return batch;
}

}  // namespace mgce

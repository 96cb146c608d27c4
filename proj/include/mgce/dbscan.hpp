#pragma once

#include <algorithm>
#include <deque>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"

namespace mgce {

struct DbscanParams {
  double eps = 0.5;  // neighborhood radius in cosine-distance units, (0, 2)
  int min_pts = 4;   // minimum neighborhood size (self included) to be core

  void validate() const {
    if (!(eps > 0.0 && eps < 2.0))
      fail("config_invalid", "dbscan: eps must lie in (0, 2), got " + std::to_string(eps));
    if (min_pts < 1) fail("config_invalid", "dbscan: min_pts must be >= 1");
  }
};

// Per-sample integer cluster id; -1 marks noise. Cluster ids are dense in
// [0, num_clusters) and assigned in first-discovery order under ascending
// sample-index iteration, so identical inputs yield identical label arrays.
struct ClusterLabeling {
  std::vector<int> labels;
  int num_clusters = 0;

  Index size() const { return static_cast<Index>(labels.size()); }

  double noise_fraction() const {
    if (labels.empty()) return 0.0;
    Index noise = 0;
    for (const int l : labels) noise += (l < 0);
    return static_cast<double>(noise) / static_cast<double>(labels.size());
  }

  Index num_clustered() const {
    Index n = 0;
    for (const int l : labels) n += (l >= 0);
    return n;
  }

  // Member index lists per cluster, each sorted ascending.
  std::vector<std::vector<Index>> members() const {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_clusters));
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
    return out;
  }

  static ClusterLabeling from_labels(std::vector<int> labels) {
    int c = 0;
    for (const int l : labels) {
      if (l < -1) fail("config_invalid", "labeling: labels must be >= -1");
      c = std::max(c, l + 1);
    }
    std::vector<bool> seen(static_cast<std::size_t>(c), false);
    for (const int l : labels)
      if (l >= 0) seen[static_cast<std::size_t>(l)] = true;
    for (int j = 0; j < c; ++j)
      if (!seen[static_cast<std::size_t>(j)])
        fail("config_invalid", "labeling: cluster id " + std::to_string(j) + " never occurs");
    return ClusterLabeling{std::move(labels), c};
  }
};

// 1 - <f_i, f_j> over unit-norm rows, clamped to [0, 2], exactly symmetric
// with a zero diagonal (upper triangle mirrored).
template <typename Scalar>
MatrixX<Scalar> cosine_distance_matrix(const MatrixX<Scalar>& features) {
  require_unit_rows(features, "cosine_distance_matrix");
  const Index n = features.rows();
  MatrixX<Scalar> gram = features * features.transpose();
  MatrixX<Scalar> dist(n, n);
  for (Index i = 0; i < n; ++i) {
    dist(i, i) = Scalar(0);
    for (Index j = i + 1; j < n; ++j) {
      const Scalar d = std::clamp(Scalar(1) - gram(i, j), Scalar(0), Scalar(2));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

// Classic DBSCAN on a precomputed distance matrix. Point i is core iff its
// eps-neighborhood (self included) holds at least min_pts points. Clusters
// are expanded one seed at a time in ascending index order with a FIFO
// frontier, which fixes the canonical labeling and resolves border-point
// ties toward the cluster whose seed core point has the smallest index.
template <typename Scalar>
ClusterLabeling dbscan_from_distances(const MatrixX<Scalar>& dist, const DbscanParams& params) {
  params.validate();
  const Index n = dist.rows();
  if (n < 1) fail("config_invalid", "dbscan: need at least one sample");

  std::vector<std::vector<Index>> neighbors(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto& ni = neighbors[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j)
      if (dist(i, j) <= Scalar(params.eps)) ni.push_back(j);
  }
  std::vector<bool> core(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    core[static_cast<std::size_t>(i)] =
        neighbors[static_cast<std::size_t>(i)].size() >= static_cast<std::size_t>(params.min_pts);

  constexpr int kUnvisited = -2;
  std::vector<int> labels(static_cast<std::size_t>(n), kUnvisited);
  int cid = 0;
  std::deque<Index> frontier;
  for (Index seed = 0; seed < n; ++seed) {
    if (labels[static_cast<std::size_t>(seed)] != kUnvisited) continue;
    if (!core[static_cast<std::size_t>(seed)]) {
      labels[static_cast<std::size_t>(seed)] = -1;  // tentative noise, may become border
      continue;
    }
    labels[static_cast<std::size_t>(seed)] = cid;
    frontier.clear();
    frontier.push_back(seed);
    while (!frontier.empty()) {
      const Index p = frontier.front();
      frontier.pop_front();
      for (const Index q : neighbors[static_cast<std::size_t>(p)]) {
        int& lq = labels[static_cast<std::size_t>(q)];
        if (lq != kUnvisited && lq != -1) continue;
        lq = cid;
        if (core[static_cast<std::size_t>(q)]) frontier.push_back(q);
      }
    }
    ++cid;
  }
  return ClusterLabeling{std::move(labels), cid};
}

template <typename Scalar>
ClusterLabeling dbscan(const MatrixX<Scalar>& features, const DbscanParams& params) {
  return dbscan_from_distances(cosine_distance_matrix(features), params);
}

}  // namespace mgce

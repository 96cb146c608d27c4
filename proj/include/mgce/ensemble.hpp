#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/dbscan.hpp"
#include "mgce/error.hpp"

namespace mgce {

// Ascending ladder of DBSCAN radii d, d+delta, ..., covering [lo, hi]
// (hi itself included when (hi - lo) is an integer multiple of delta
// within 1e-9).
struct GranularityLadder {
  double lo = 0.4;
  double hi = 0.6;
  double delta = 0.05;

  static GranularityLadder make(double lo, double hi, double delta) {
    GranularityLadder l{lo, hi, delta};
    l.validate();
    return l;
  }

  void validate() const {
    if (!(delta > 0.0)) fail("config_invalid", "ladder: delta must be > 0");
    if (!(lo <= hi)) fail("config_invalid", "ladder: lo must be <= hi");
  }

  std::vector<double> values() const {
    validate();
    const auto steps = static_cast<long>(std::floor((hi - lo) / delta + 1e-9));
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(steps) + 1);
    for (long k = 0; k <= steps; ++k) v.push_back(lo + static_cast<double>(k) * delta);
    return v;
  }

  int t() const { return static_cast<int>(values().size()); }
};

// Binary co-cluster matrix of one labeling, stored as per-row sorted index
// lists. Symmetric, diagonal always set. Noise points match only themselves:
// -1 is an "unclustered" marker, not a shared cluster.
struct AffinityMatrix {
  Index n = 0;
  std::vector<std::vector<Index>> rows;

  bool at(Index i, Index j) const {
    const auto& r = rows[static_cast<std::size_t>(i)];
    return std::binary_search(r.begin(), r.end(), j);
  }
};

inline AffinityMatrix affinity(const ClusterLabeling& labeling) {
  AffinityMatrix a;
  a.n = labeling.size();
  a.rows.resize(static_cast<std::size_t>(a.n));
  const auto members = labeling.members();
  for (Index i = 0; i < a.n; ++i) {
    const int l = labeling.labels[static_cast<std::size_t>(i)];
    if (l < 0)
      a.rows[static_cast<std::size_t>(i)] = {i};
    else
      a.rows[static_cast<std::size_t>(i)] = members[static_cast<std::size_t>(l)];
  }
  return a;
}

// Sparse symmetric matrix of priority weights p_ij in {0, 1/T, ..., 1}:
// the fraction of granularities that co-cluster the pair. Absent entries
// are exactly zero; the diagonal is always 1.
template <typename Scalar = double>
struct PriorityMatrix {
  struct Entry {
    Index j;
    Scalar p;
  };

  Index n = 0;
  int t = 0;
  std::vector<std::vector<Entry>> rows;  // sorted by j, diagonal included

  Scalar at(Index i, Index j) const {
    const auto& r = rows[static_cast<std::size_t>(i)];
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, Index v) { return e.j < v; });
    return (it != r.end() && it->j == j) ? it->p : Scalar(0);
  }

  // Sum of the stored row entries (the denominator of the weighted positive
  // similarity).
  Scalar row_weight(Index i) const {
    Scalar s = 0;
    for (const Entry& e : rows[static_cast<std::size_t>(i)]) s += e.p;
    return s;
  }

  // Normalizes unordered (i, j, p) triples into sorted symmetric row lists.
  // Diagonal entries are implied and must not be passed.
  static PriorityMatrix from_triples(Index n, int t,
                                     const std::vector<std::tuple<Index, Index, Scalar>>& triples) {
    PriorityMatrix m;
    m.n = n;
    m.t = t;
    m.rows.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) m.rows[static_cast<std::size_t>(i)].push_back({i, Scalar(1)});
    for (const auto& [i, j, p] : triples) {
      if (i < 0 || i >= n || j < 0 || j >= n || i == j)
        fail("config_invalid", "priority triples: bad pair (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
      if (!(p > Scalar(0)))
        fail("config_invalid", "priority triples: stored entries must be positive");
      m.rows[static_cast<std::size_t>(i)].push_back({j, p});
      m.rows[static_cast<std::size_t>(j)].push_back({i, p});
    }
    for (auto& r : m.rows) {
      std::sort(r.begin(), r.end(), [](const Entry& a, const Entry& b) { return a.j < b.j; });
      for (std::size_t k = 1; k < r.size(); ++k)
        if (r[k].j == r[k - 1].j)
          fail("config_invalid", "priority triples: duplicate pair");
    }
    return m;
  }
};

// Elementwise mean of the T co-cluster affinities, stored sparsely.
template <typename Scalar = double>
PriorityMatrix<Scalar> priority(const std::vector<ClusterLabeling>& labelings, int t) {
  if (static_cast<int>(labelings.size()) != t || t < 1)
    fail("length_mismatch", "priority: expected " + std::to_string(t) + " labelings, got " +
                                std::to_string(labelings.size()));
  const Index n = labelings.front().size();
  for (const auto& l : labelings)
    if (l.size() != n) fail("length_mismatch", "priority: labelings cover different sample counts");

  std::vector<std::vector<std::vector<Index>>> members;
  members.reserve(labelings.size());
  for (const auto& l : labelings) members.push_back(l.members());

  PriorityMatrix<Scalar> m;
  m.n = n;
  m.t = t;
  m.rows.resize(static_cast<std::size_t>(n));
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    for (std::size_t ell = 0; ell < labelings.size(); ++ell) {
      const int l = labelings[ell].labels[static_cast<std::size_t>(i)];
      if (l < 0)
        ++count[static_cast<std::size_t>(i)];
      else
        for (const Index j : members[ell][static_cast<std::size_t>(l)])
          ++count[static_cast<std::size_t>(j)];
    }
    auto& row = m.rows[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if (count[static_cast<std::size_t>(j)] == 0) continue;
      row.push_back({j, Scalar(static_cast<double>(count[static_cast<std::size_t>(j)]) /
                               static_cast<double>(t))});
      count[static_cast<std::size_t>(j)] = 0;
    }
  }
  return m;
}

template <typename Scalar>
struct PriorityBuild {
  PriorityMatrix<Scalar> prio;
  std::vector<ClusterLabeling> labelings;  // one per ladder value, ascending d
};

// Runs DBSCAN once per ladder granularity on a shared distance matrix and
// averages the co-cluster affinities.
template <typename Scalar>
PriorityBuild<Scalar> build_priority(const MatrixX<Scalar>& features,
                                     const GranularityLadder& ladder, int min_pts) {
  const auto values = ladder.values();
  const MatrixX<Scalar> dist = cosine_distance_matrix(features);
  PriorityBuild<Scalar> out;
  out.labelings.reserve(values.size());
  for (const double d : values)
    out.labelings.push_back(dbscan_from_distances(dist, DbscanParams{d, min_pts}));
  out.prio = priority<Scalar>(out.labelings, static_cast<int>(values.size()));
  return out;
}

}  // namespace mgce

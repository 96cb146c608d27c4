#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"

namespace mgce {

// Cross-camera retrieval protocol: per query, gallery entries sharing both
// its identity and camera are excluded, and gallery entries with id -1
// (junk) are excluded globally.
template <typename Scalar = double>
struct EvalSet {
  MatrixX<Scalar> query_features;    // unit-norm rows
  MatrixX<Scalar> gallery_features;  // unit-norm rows
  std::vector<int> query_ids, gallery_ids;
  std::vector<int> query_cams, gallery_cams;

  void validate() const {
    if (query_features.cols() != gallery_features.cols())
      fail("dim_mismatch", "evalset: query and gallery feature dims differ");
    const auto q = static_cast<std::size_t>(query_features.rows());
    const auto g = static_cast<std::size_t>(gallery_features.rows());
    if (query_ids.size() != q || query_cams.size() != q || gallery_ids.size() != g ||
        gallery_cams.size() != g)
      fail("shape_mismatch", "evalset: id/cam arrays must align with feature rows");
    if (q == 0) fail("no_valid_queries", "evalset: empty query set");
  }
};

namespace detail {

// Ranks one query against precomputed similarities (one row of Q x G).
template <typename Scalar>
std::vector<Index> rank_one(const EvalSet<Scalar>& s, Index q,
                            const Eigen::Ref<const Eigen::RowVectorXd>& sims) {
  std::vector<Index> order;
  order.reserve(s.gallery_ids.size());
  const int qid = s.query_ids[static_cast<std::size_t>(q)];
  const int qcam = s.query_cams[static_cast<std::size_t>(q)];
  for (Index j = 0; j < static_cast<Index>(s.gallery_ids.size()); ++j) {
    const int gid = s.gallery_ids[static_cast<std::size_t>(j)];
    if (gid == -1) continue;                                              // junk
    if (gid == qid && s.gallery_cams[static_cast<std::size_t>(j)] == qcam) continue;
    order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (sims(a) != sims(b)) return sims(a) > sims(b);
    return a < b;  // deterministic tie-break
  });
  return order;
}

}  // namespace detail

// Gallery indices sorted by descending cosine similarity to query q, ties
// broken by ascending index, protocol exclusions applied before ranking.
template <typename Scalar>
std::vector<Index> rank_gallery(Index q_index, const EvalSet<Scalar>& s) {
  s.validate();
  if (q_index < 0 || q_index >= s.query_features.rows())
    fail("index_out_of_range", "rank_gallery: query index " + std::to_string(q_index));
  const MatrixX<Scalar> sims =
      cosine_similarity(s.query_features.row(q_index), s.gallery_features);
  Eigen::RowVectorXd row = sims.row(0).template cast<double>();
  return detail::rank_one(s, q_index, row);
}

// AP = (1/R) * sum over relevant ranks r of precision@r.
inline double average_precision(const std::vector<bool>& relevance) {
  Index total_relevant = 0;
  for (const bool r : relevance) total_relevant += r;
  if (total_relevant == 0) fail("no_relevant", "average_precision: no relevant entries");
  double acc = 0.0;
  Index hits = 0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (relevance[r]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return acc / static_cast<double>(total_relevant);
}

struct EvalResult {
  double map = 0.0;
  double cmc1 = 0.0, cmc5 = 0.0, cmc10 = 0.0;
  Index num_queries = 0;  // scored queries
  Index num_skipped = 0;  // queries with no cross-camera relevant entry
};

// mAP plus CMC@{1,5,10} over the scored queries. Queries without any
// relevant gallery entry are skipped, not scored zero.
template <typename Scalar>
EvalResult evaluate(const EvalSet<Scalar>& s) {
  s.validate();
  require_unit_rows(s.query_features, "evaluate queries");
  require_unit_rows(s.gallery_features, "evaluate gallery");
  const MatrixX<Scalar> sims = s.query_features * s.gallery_features.transpose();

  EvalResult out;
  double ap_sum = 0.0;
  Index hit1 = 0, hit5 = 0, hit10 = 0;
  for (Index q = 0; q < s.query_features.rows(); ++q) {
    Eigen::RowVectorXd row = sims.row(q).template cast<double>();
    const auto order = detail::rank_one(s, q, row);
    std::vector<bool> rel(order.size());
    bool any = false;
    for (std::size_t r = 0; r < order.size(); ++r) {
      rel[r] = s.gallery_ids[static_cast<std::size_t>(order[r])] ==
               s.query_ids[static_cast<std::size_t>(q)];
      any = any || rel[r];
    }
    if (!any) {
      ++out.num_skipped;
      continue;
    }
    ap_sum += average_precision(rel);
    ++out.num_queries;
    const auto top_hit = [&](std::size_t k) {
      const std::size_t lim = std::min(k, rel.size());
      for (std::size_t r = 0; r < lim; ++r)
        if (rel[r]) return true;
      return false;
    };
    hit1 += top_hit(1);
    hit5 += top_hit(5);
    hit10 += top_hit(10);
  }
  if (out.num_queries == 0) fail("no_valid_queries", "evaluate: every query was skipped");
  out.map = ap_sum / static_cast<double>(out.num_queries);
  out.cmc1 = static_cast<double>(hit1) / static_cast<double>(out.num_queries);
  out.cmc5 = static_cast<double>(hit5) / static_cast<double>(out.num_queries);
  out.cmc10 = static_cast<double>(hit10) / static_cast<double>(out.num_queries);
  return out;
}

}  // namespace mgce

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/dbscan.hpp"
#include "mgce/ensemble.hpp"
#include "mgce/error.hpp"

namespace mgce {

struct LossConfig {
  double tau = 0.05;  // softmax temperature

  void validate() const {
    if (!(tau > 0.0)) fail("config_invalid", "loss: tau must be > 0");
  }
};

// Mini-batch of anchors: dataset ids plus the encoder features aligned with
// them. Ids may repeat (with-replacement sampling from small clusters); the
// trainer deduplicates before touching the memory bank.
template <typename Scalar = double>
struct Batch {
  std::vector<Index> indices;
  MatrixX<Scalar> features;

  void validate(Index dataset_size) const {
    if (indices.empty() || static_cast<Index>(indices.size()) != features.rows())
      fail("shape_mismatch", "batch: need one feature row per id, got " +
                                 std::to_string(indices.size()) + " ids / " +
                                 std::to_string(features.rows()) + " rows");
    for (const Index i : indices)
      if (i < 0 || i >= dataset_size)
        fail("index_out_of_range", "batch: sample id " + std::to_string(i) + " outside [0, " +
                                       std::to_string(dataset_size) + ")");
  }
};

// Arithmetic (not renormalized) means of the memory rows per cluster, with
// the member index sets carried alongside. Noise points contribute nowhere.
template <typename Scalar = double>
struct ClusterCentroids {
  MatrixX<Scalar> means;                    // C x D
  std::vector<Index> counts;                // per-cluster sizes
  std::vector<std::vector<Index>> members;  // sorted ascending
};

template <typename Scalar>
ClusterCentroids<Scalar> centroids(const MatrixX<Scalar>& memory_snapshot,
                                   const ClusterLabeling& labeling) {
  if (labeling.size() != memory_snapshot.rows())
    fail("shape_mismatch", "centroids: labeling covers " + std::to_string(labeling.size()) +
                               " samples, snapshot has " +
                               std::to_string(memory_snapshot.rows()));
  if (labeling.num_clusters == 0) fail("no_clusters", "centroids: labeling has no clusters");

  ClusterCentroids<Scalar> c;
  c.members = labeling.members();
  const auto num = static_cast<std::size_t>(labeling.num_clusters);
  c.means = MatrixX<Scalar>::Zero(labeling.num_clusters, memory_snapshot.cols());
  c.counts.resize(num);
  for (std::size_t j = 0; j < num; ++j) {
    const auto& mem = c.members[j];
    c.counts[j] = static_cast<Index>(mem.size());
    for (const Index i : mem) c.means.row(static_cast<Index>(j)) += memory_snapshot.row(i);
    c.means.row(static_cast<Index>(j)) /= Scalar(mem.size());
  }
  return c;
}

// Scalar loss plus its gradient with respect to the (unit-norm) batch rows;
// memory features are treated as constants. Excluded anchors keep zero
// gradient rows. s_plus / s_minus are the positive and negative exponential
// similarity masses of each anchor.
template <typename Scalar = double>
struct LossReport {
  struct Anchor {
    Scalar s_plus = 0;
    Scalar s_minus = 0;
    bool included = false;
  };

  Scalar value = 0;
  MatrixX<Scalar> grad;
  std::vector<Anchor> per_anchor;

  Index num_included() const {
    Index n = 0;
    for (const auto& a : per_anchor) n += a.included;
    return n;
  }
};

namespace detail {

// Shared tail: averages per-anchor terms over the included anchors only.
template <typename Scalar>
void finalize_report(LossReport<Scalar>& report, Scalar term_sum, const char* empty_code,
                     const char* empty_message) {
  const Index included = report.num_included();
  if (included == 0) fail(empty_code, empty_message);
  report.value = term_sum / Scalar(included);
  report.grad /= Scalar(included);
}

}  // namespace detail

// Softmax over cluster centroids: the anchor is attracted to its own
// cluster mean and repelled from every other cluster mean. Noise-labeled
// anchors are excluded from the average.
template <typename Scalar>
LossReport<Scalar> cluster_nce_loss(const Batch<Scalar>& batch,
                                    const ClusterCentroids<Scalar>& cents,
                                    const ClusterLabeling& labeling, const LossConfig& cfg) {
  cfg.validate();
  batch.validate(labeling.size());
  const Scalar tau = Scalar(cfg.tau);
  const Index b = batch.features.rows();
  const auto c = static_cast<Index>(cents.counts.size());

  // all centroid similarities at once: b x C
  const MatrixX<Scalar> sims = batch.features * cents.means.transpose();

  LossReport<Scalar> report;
  report.grad = MatrixX<Scalar>::Zero(b, batch.features.cols());
  report.per_anchor.resize(static_cast<std::size_t>(b));
  Scalar term_sum = 0;
  std::vector<Scalar> scratch(static_cast<std::size_t>(c));
  for (Index k = 0; k < b; ++k) {
    const Index i = batch.indices[static_cast<std::size_t>(k)];
    const int label = labeling.labels[static_cast<std::size_t>(i)];
    auto& diag = report.per_anchor[static_cast<std::size_t>(k)];
    if (label < 0) continue;

    for (Index j = 0; j < c; ++j) scratch[static_cast<std::size_t>(j)] = sims(k, j) / tau;
    const Scalar a_plus = scratch[static_cast<std::size_t>(label)];
    const Scalar lse = log_sum_exp(std::span<const Scalar>(scratch));
    term_sum += lse - a_plus;

    Scalar s_minus = 0;
    for (Index j = 0; j < c; ++j) {
      const Scalar w = std::exp(scratch[static_cast<std::size_t>(j)] - lse);
      const Scalar coeff = (j == label) ? w - Scalar(1) : w;
      report.grad.row(k) += (coeff / tau) * cents.means.row(j);
      if (j != label) s_minus += std::exp(scratch[static_cast<std::size_t>(j)]);
    }
    diag = {std::exp(a_plus), s_minus, true};
  }
  detail::finalize_report(report, term_sum, "all_anchors_noise",
                          "cluster_nce_loss: every batch anchor is labeled noise");
  return report;
}

// Hybrid loss: positives summarized by the anchor's cluster mean, every
// sample outside the cluster (noise included) repelled individually. The
// per-anchor term is computed in log space as lse([a+] ++ negatives) - a+.
template <typename Scalar>
LossReport<Scalar> hcl_loss(const Batch<Scalar>& batch, const MatrixX<Scalar>& memory_snapshot,
                            const ClusterLabeling& labeling, const ClusterCentroids<Scalar>& cents,
                            const LossConfig& cfg) {
  cfg.validate();
  const Index n = memory_snapshot.rows();
  batch.validate(n);
  if (labeling.size() != n)
    fail("shape_mismatch", "hcl_loss: labeling does not cover the memory snapshot");
  const Scalar tau = Scalar(cfg.tau);
  const Index b = batch.features.rows();

  const MatrixX<Scalar> sims = batch.features * memory_snapshot.transpose();  // b x N
  const MatrixX<Scalar> cent_sims = batch.features * cents.means.transpose();

  LossReport<Scalar> report;
  report.grad = MatrixX<Scalar>::Zero(b, batch.features.cols());
  report.per_anchor.resize(static_cast<std::size_t>(b));
  Scalar term_sum = 0;
  std::vector<Scalar> exponents;
  std::vector<Index> neg_ids;
  for (Index k = 0; k < b; ++k) {
    const Index i = batch.indices[static_cast<std::size_t>(k)];
    const int label = labeling.labels[static_cast<std::size_t>(i)];
    auto& diag = report.per_anchor[static_cast<std::size_t>(k)];
    if (label < 0) continue;

    const auto& omega = cents.members[static_cast<std::size_t>(label)];
    const Scalar a_plus = cent_sims(k, label) / tau;

    exponents.clear();
    neg_ids.clear();
    exponents.push_back(a_plus);
    std::size_t m = 0;  // cursor into the sorted member list
    for (Index j = 0; j < n; ++j) {
      if (m < omega.size() && omega[m] == j) {
        ++m;
        continue;
      }
      neg_ids.push_back(j);
      exponents.push_back(sims(k, j) / tau);
    }
    const Scalar lse = log_sum_exp(std::span<const Scalar>(exponents));
    term_sum += lse - a_plus;

    const Scalar w_plus = std::exp(a_plus - lse);
    report.grad.row(k) = ((w_plus - Scalar(1)) / tau) * cents.means.row(label);
    Scalar s_minus = 0;
    for (std::size_t z = 0; z < neg_ids.size(); ++z) {
      const Scalar a_j = exponents[z + 1];
      report.grad.row(k) += (std::exp(a_j - lse) / tau) * memory_snapshot.row(neg_ids[z]);
      s_minus += std::exp(a_j);
    }
    diag = {std::exp(a_plus), s_minus, true};
  }
  detail::finalize_report(report, term_sum, "all_anchors_noise",
                          "hcl_loss: every batch anchor is labeled noise");
  return report;
}

// Priority-weighted hybrid loss: the positive score is the exponential of
// the priority-weighted mean similarity to the memory rows, the negatives
// are exactly the zero-priority samples. Anchors whose priority row holds
// only the diagonal are excluded.
template <typename Scalar>
LossReport<Scalar> pc_loss(const Batch<Scalar>& batch, const MatrixX<Scalar>& memory_snapshot,
                           const PriorityMatrix<Scalar>& prio, const LossConfig& cfg) {
  cfg.validate();
  const Index n = memory_snapshot.rows();
  batch.validate(n);
  if (prio.n != n) fail("shape_mismatch", "pc_loss: priority matrix does not cover the snapshot");
  const Scalar tau = Scalar(cfg.tau);
  const Index b = batch.features.rows();
  const Index d = batch.features.cols();

  const MatrixX<Scalar> sims = batch.features * memory_snapshot.transpose();  // b x N

  LossReport<Scalar> report;
  report.grad = MatrixX<Scalar>::Zero(b, d);
  report.per_anchor.resize(static_cast<std::size_t>(b));
  Scalar term_sum = 0;
  std::vector<Scalar> exponents;
  std::vector<Index> neg_ids;
  VectorX<Scalar> weighted_mean(d);
  for (Index k = 0; k < b; ++k) {
    const Index i = batch.indices[static_cast<std::size_t>(k)];
    const auto& row = prio.rows[static_cast<std::size_t>(i)];
    auto& diag = report.per_anchor[static_cast<std::size_t>(k)];
    if (row.size() <= 1) continue;  // only the diagonal positive

    Scalar weight_sum = 0;
    Scalar sim_sum = 0;
    weighted_mean.setZero();
    for (const auto& e : row) {
      weight_sum += e.p;
      sim_sum += e.p * sims(k, e.j);
      weighted_mean += e.p * memory_snapshot.row(e.j).transpose();
    }
    weighted_mean /= weight_sum;
    const Scalar a_plus = sim_sum / (weight_sum * tau);

    exponents.clear();
    neg_ids.clear();
    exponents.push_back(a_plus);
    std::size_t m = 0;  // cursor into the sorted priority row
    for (Index j = 0; j < n; ++j) {
      if (m < row.size() && row[m].j == j) {
        ++m;
        continue;
      }
      neg_ids.push_back(j);
      exponents.push_back(sims(k, j) / tau);
    }
    const Scalar lse = log_sum_exp(std::span<const Scalar>(exponents));
    term_sum += lse - a_plus;

    const Scalar w_plus = std::exp(a_plus - lse);
    report.grad.row(k) = ((w_plus - Scalar(1)) / tau) * weighted_mean.transpose();
    Scalar s_minus = 0;
    for (std::size_t z = 0; z < neg_ids.size(); ++z) {
      const Scalar a_j = exponents[z + 1];
      report.grad.row(k) += (std::exp(a_j - lse) / tau) * memory_snapshot.row(neg_ids[z]);
      s_minus += std::exp(a_j);
    }
    diag = {std::exp(a_plus), s_minus, true};
  }
  detail::finalize_report(report, term_sum, "all_anchors_isolated",
                          "pc_loss: every batch anchor has an empty positive set");
  return report;
}

}  // namespace mgce

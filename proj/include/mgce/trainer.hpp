#pragma once

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "mgce/adam.hpp"
#include "mgce/core.hpp"
#include "mgce/dbscan.hpp"
#include "mgce/encoder.hpp"
#include "mgce/ensemble.hpp"
#include "mgce/error.hpp"
#include "mgce/losses.hpp"
#include "mgce/memory_bank.hpp"
#include "mgce/rng.hpp"
#include "mgce/sampler.hpp"

namespace mgce {

enum class LossKind { cluster_nce, hcl, pc };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::cluster_nce: return "cluster_nce";
    case LossKind::hcl: return "hcl";
    case LossKind::pc: return "pc";
  }
  return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cluster_nce") return LossKind::cluster_nce;
  if (s == "hcl") return LossKind::hcl;
  if (s == "pc") return LossKind::pc;
  fail("config_invalid", "unknown loss kind '" + s + "' (expected cluster_nce|hcl|pc)");
}

struct TrainConfig {
  int epochs = 50;
  int p_identities = 16;  // P pseudo identities per batch
  int k_instances = 4;    // K samples per identity
  int iters_per_epoch = 0;  // 0 = ceil(#clustered / (P*K))
  LossKind loss_kind = LossKind::pc;
  double single_d = 0.5;                            // cluster_nce / hcl radius
  GranularityLadder ladder{0.4, 0.6, 0.05};         // pc ladder
  int min_pts = 4;
  double gamma = 0.2;        // memory momentum
  double tau = 0.05;         // loss temperature
  double jitter_sigma = 0.05;  // feature-space augmentation noise
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) fail("config_invalid", "train: epochs must be >= 0");
    if (p_identities < 1 || k_instances < 1 || p_identities * k_instances < 2)
      fail("config_invalid", "train: need P, K >= 1 and P*K >= 2");
    if (iters_per_epoch < 0) fail("config_invalid", "train: iters_per_epoch must be >= 0 (0 = auto)");
    if (min_pts < 1) fail("config_invalid", "train: min_pts must be >= 1");
    if (!(tau > 0.0)) fail("config_invalid", "train: tau must be > 0");
    if (jitter_sigma < 0.0) fail("config_invalid", "train: jitter_sigma must be >= 0");
    if (loss_kind == LossKind::pc) ladder.validate();
  }
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  std::vector<int> clusters_per_granularity;
  double noise_fraction = 0.0;
};

using TrainLog = std::vector<EpochStats>;

template <typename Scalar = double>
struct TrainResult {
  Encoder<Scalar> encoder;
  MemoryBank<Scalar> bank;
  TrainLog log;
};

namespace detail {
// Substream salts; spread out so nested splits cannot collide.
constexpr std::uint64_t kEncoderInitStream = 0x01;
constexpr std::uint64_t kEpochStreamBase = 0x100;
}  // namespace detail

// The full epoch loop: recluster the memory snapshot, build the priority
// matrix (pc) or a single labeling, then iterate PK batches through
// forward / loss / backward / optimizer step / memory update. For pc the
// sampler uses the coarsest (largest-d) labeling, where every pair that is
// co-clustered at any granularity is also co-clustered.
template <typename Scalar = double>
TrainResult<Scalar> train(const MatrixX<Scalar>& raw_features, const EncoderConfig& enc_cfg,
                          const AdamConfig& adam_cfg, const TrainConfig& cfg) {
  cfg.validate();
  enc_cfg.validate();
  adam_cfg.validate();
  const Index n = raw_features.rows();
  if (n < 1) fail("config_invalid", "train: empty dataset");

  Rng root(cfg.seed);
  Encoder<Scalar> enc(enc_cfg, root.split(detail::kEncoderInitStream));
  AdamState<Scalar> adam = AdamState<Scalar>::like(enc.params());

  MatrixX<Scalar> init_features = enc.forward(raw_features, Scalar(0), nullptr);
  MemoryBank<Scalar> bank(init_features, Scalar(cfg.gamma));

  const bool use_pc = cfg.loss_kind == LossKind::pc;
  const std::vector<double> ladder_values =
      use_pc ? cfg.ladder.values() : std::vector<double>{cfg.single_d};

  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const MatrixX<Scalar> snap = bank.snapshot();
    const MatrixX<Scalar> dist = cosine_distance_matrix(snap);
    std::vector<ClusterLabeling> labelings;
    labelings.reserve(ladder_values.size());
    for (const double d : ladder_values)
      labelings.push_back(dbscan_from_distances(dist, DbscanParams{d, cfg.min_pts}));

    // cores persist as eps grows, so an empty coarsest labeling means every
    // granularity is empty
    const ClusterLabeling& sampling_labeling = labelings.back();
    if (sampling_labeling.num_clusters == 0)
      fail("degenerate_clustering",
           "train: epoch " + std::to_string(epoch) + " produced no clusters at any granularity");

    std::optional<PriorityMatrix<Scalar>> prio;
    std::optional<ClusterCentroids<Scalar>> cents;
    if (use_pc)
      prio = priority<Scalar>(labelings, static_cast<int>(labelings.size()));
    else
      cents = centroids(snap, sampling_labeling);

    const int batch_size = cfg.p_identities * cfg.k_instances;
    const Index clustered = sampling_labeling.num_clustered();
    const int iters = cfg.iters_per_epoch > 0
                          ? cfg.iters_per_epoch
                          : static_cast<int>((clustered + batch_size - 1) / batch_size);

    Rng epoch_rng = root.split(detail::kEpochStreamBase + static_cast<std::uint64_t>(epoch));
    Scalar loss_sum = 0;
    for (int it = 0; it < iters; ++it) {
      Rng iter_rng = epoch_rng.split(static_cast<std::uint64_t>(it));
      Batch<Scalar> batch;
      batch.indices = pk_sample(sampling_labeling, cfg.p_identities, cfg.k_instances, iter_rng);
      MatrixX<Scalar> raw_batch(static_cast<Index>(batch.indices.size()), raw_features.cols());
      for (std::size_t r = 0; r < batch.indices.size(); ++r)
        raw_batch.row(static_cast<Index>(r)) = raw_features.row(batch.indices[r]);
      batch.features = enc.forward(raw_batch, Scalar(cfg.jitter_sigma), &iter_rng);

      LossReport<Scalar> report;
      const LossConfig loss_cfg{cfg.tau};
      switch (cfg.loss_kind) {
        case LossKind::cluster_nce:
          report = cluster_nce_loss(batch, *cents, sampling_labeling, loss_cfg);
          break;
        case LossKind::hcl:
          report = hcl_loss(batch, snap, sampling_labeling, *cents, loss_cfg);
          break;
        case LossKind::pc:
          report = pc_loss(batch, snap, *prio, loss_cfg);
          break;
      }
      loss_sum += report.value;

      const auto grads = enc.backward(report.grad);
      if (!grads.empty()) adam_step(enc.params(), grads, adam, adam_cfg);

      // first occurrence wins among with-replacement duplicates
      std::vector<Index> unique_ids;
      std::vector<Index> unique_rows;
      std::unordered_set<Index> seen;
      for (std::size_t r = 0; r < batch.indices.size(); ++r) {
        if (seen.insert(batch.indices[r]).second) {
          unique_ids.push_back(batch.indices[r]);
          unique_rows.push_back(static_cast<Index>(r));
        }
      }
      MatrixX<Scalar> update_feats(static_cast<Index>(unique_rows.size()), batch.features.cols());
      for (std::size_t r = 0; r < unique_rows.size(); ++r)
        update_feats.row(static_cast<Index>(r)) = batch.features.row(unique_rows[r]);
      bank.update(unique_ids, update_feats);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = iters > 0 ? static_cast<double>(loss_sum) / iters : 0.0;
    for (const auto& l : labelings) stats.clusters_per_granularity.push_back(l.num_clusters);
    stats.noise_fraction = sampling_labeling.noise_fraction();
    log.push_back(std::move(stats));
  }

  return TrainResult<Scalar>{std::move(enc), std::move(bank), std::move(log)};
}

}  // namespace mgce

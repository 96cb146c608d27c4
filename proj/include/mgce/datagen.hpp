#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"
#include "mgce/rng.hpp"

namespace mgce {

// Synthetic identity-structured features: identity centers drawn uniformly
// on the unit sphere, a fixed offset per camera, gaussian within-identity
// noise, cameras assigned round-robin.
struct SynthConfig {
  int num_ids = 100;
  int samples_per_id = 8;
  int dim = 32;
  int num_cams = 4;
  double intra_sigma = 0.12;
  double cam_sigma = 0.06;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_ids < 1 || dim < 1) fail("config_invalid", "synth: num_ids and dim must be positive");
    if (samples_per_id < 2) fail("config_invalid", "synth: need samples_per_id >= 2");
    if (num_cams < 2) fail("config_invalid", "synth: need num_cams >= 2");
    if (intra_sigma < 0.0 || cam_sigma < 0.0)
      fail("config_invalid", "synth: sigmas must be >= 0");
  }
};

// Presets are fixed reference points; the seed is supplied separately.
inline SynthConfig synth_preset(const std::string& name) {
  if (name == "easy") return SynthConfig{50, 8, 32, 4, 0.05, 0.02, 0};
  if (name == "medium") return SynthConfig{100, 8, 32, 4, 0.12, 0.06, 0};
  if (name == "hard") return SynthConfig{100, 8, 32, 4, 0.20, 0.10, 0};
  fail("config_invalid", "unknown preset '" + name + "' (expected easy|medium|hard)");
}

template <typename Scalar = double>
struct LabeledDataset {
  MatrixX<Scalar> features;  // raw, not normalized
  std::vector<int> ids;
  std::vector<int> cams;
  std::vector<Index> query;    // row indices held out per (id, cam)
  std::vector<Index> gallery;  // remaining rows
};

template <typename Scalar = double>
LabeledDataset<Scalar> generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  MatrixX<Scalar> centers(cfg.num_ids, cfg.dim);
  for (Index i = 0; i < centers.rows(); ++i)
    for (Index j = 0; j < centers.cols(); ++j) centers(i, j) = Scalar(rng.next_gaussian());
  centers = l2_normalize(centers);

  MatrixX<Scalar> cam_offsets(cfg.num_cams, cfg.dim);
  for (Index i = 0; i < cam_offsets.rows(); ++i)
    for (Index j = 0; j < cam_offsets.cols(); ++j) cam_offsets(i, j) = Scalar(rng.next_gaussian());
  cam_offsets = l2_normalize(cam_offsets);
  cam_offsets *= Scalar(cfg.cam_sigma);

  const Index n = static_cast<Index>(cfg.num_ids) * cfg.samples_per_id;
  LabeledDataset<Scalar> ds;
  ds.features.resize(n, cfg.dim);
  ds.ids.resize(static_cast<std::size_t>(n));
  ds.cams.resize(static_cast<std::size_t>(n));
  Index row = 0;
  for (int id = 0; id < cfg.num_ids; ++id) {
    for (int s = 0; s < cfg.samples_per_id; ++s, ++row) {
      const int cam = s % cfg.num_cams;
      ds.ids[static_cast<std::size_t>(row)] = id;
      ds.cams[static_cast<std::size_t>(row)] = cam;
      for (Index j = 0; j < cfg.dim; ++j)
        ds.features(row, j) = centers(id, j) + cam_offsets(cam, j) +
                              Scalar(cfg.intra_sigma) * Scalar(rng.next_gaussian());
    }
  }

  // first sample of each (id, cam) pair becomes the query, the rest gallery
  std::map<std::pair<int, int>, bool> taken;
  for (Index i = 0; i < n; ++i) {
    const auto key = std::make_pair(ds.ids[static_cast<std::size_t>(i)],
                                    ds.cams[static_cast<std::size_t>(i)]);
    if (!taken[key]) {
      taken[key] = true;
      ds.query.push_back(i);
    } else {
      ds.gallery.push_back(i);
    }
  }
  return ds;
}

}  // namespace mgce

#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"

namespace mgce {

// Per-sample feature store updated by momentum blending and renormalization:
//   f_M <- gamma * f_x + (1 - gamma) * f_M,   f_M <- f_M / |f_M|.
// Row i permanently corresponds to dataset sample i. Single-writer value:
// the training loop owns it, readers take snapshots.
template <typename Scalar = double>
class MemoryBank {
 public:
  MemoryBank(const MatrixX<Scalar>& features, Scalar gamma) : gamma_(gamma) {
    if (!(gamma >= Scalar(0) && gamma <= Scalar(1)))
      fail("gamma_out_of_range", "memory bank: gamma must be in [0, 1]");
    require_finite(features, "memory bank init");
    rows_ = l2_normalize(features);
  }

  Index size() const { return rows_.rows(); }
  Index dim() const { return rows_.cols(); }
  Scalar gamma() const { return gamma_; }
  const MatrixX<Scalar>& rows() const { return rows_; }

  // Immutable copy of the current contents.
  MatrixX<Scalar> snapshot() const { return rows_; }

  // Blends the listed rows with the batch features and renormalizes them.
  // Indices must be distinct (duplicates would make the result depend on
  // batch order) and batch rows unit-norm.
  void update(std::span<const Index> indices, const MatrixX<Scalar>& batch_features) {
    if (static_cast<Index>(indices.size()) != batch_features.rows())
      fail("shape_mismatch", "memory update: " + std::to_string(indices.size()) +
                                 " indices vs " + std::to_string(batch_features.rows()) +
                                 " batch rows");
    std::unordered_set<Index> seen;
    for (const Index i : indices) {
      if (i < 0 || i >= rows_.rows())
        fail("index_out_of_range", "memory update: sample id " + std::to_string(i) +
                                       " outside [0, " + std::to_string(rows_.rows()) + ")");
      if (!seen.insert(i).second)
        fail("duplicate_index", "memory update: sample id " + std::to_string(i) + " repeated");
    }
    require_unit_rows(batch_features, "memory update batch");
    if (gamma_ == Scalar(0)) return;  // exact identity: blend == stored row

    for (std::size_t k = 0; k < indices.size(); ++k) {
      const Index i = indices[k];
      VectorX<Scalar> blend =
          gamma_ * batch_features.row(static_cast<Index>(k)).transpose() +
          (Scalar(1) - gamma_) * rows_.row(i).transpose();
      const Scalar norm = blend.norm();
      if (norm < Scalar(1e-12))
        fail("zero_row", "memory update: blended row " + std::to_string(i) + " is degenerate");
      rows_.row(i) = blend.transpose() / norm;
    }
  }

 private:
  MatrixX<Scalar> rows_;
  Scalar gamma_;
};

}  // namespace mgce

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mgce/error.hpp"

namespace mgce {

// One row per sample throughout the library; row-major so a feature matrix
// is contiguous sample-by-sample (matches the on-disk layout).
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

using Index = Eigen::Index;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (!m.allFinite()) fail("non_finite", std::string(who) + ": matrix has NaN or Inf entries");
}

template <typename Derived>
bool has_unit_rows(const Eigen::MatrixBase<Derived>& m,
                   typename Derived::Scalar tol = typename Derived::Scalar(1e-6)) {
  using S = typename Derived::Scalar;
  for (Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - S(1)) > tol) return false;
  }
  return true;
}

template <typename Derived>
void require_unit_rows(const Eigen::MatrixBase<Derived>& m, const char* who) {
  if (!has_unit_rows(m))
    fail("not_unit_norm", std::string(who) + ": rows must be unit-norm within 1e-6");
}

// Divides each row by its Euclidean norm. Rows with norm below 1e-12 are
// rejected as degenerate embeddings.
template <typename Derived>
MatrixX<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  MatrixX<S> out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const S norm = out.row(i).norm();
    if (norm < S(1e-12))
      fail("zero_row", "l2_normalize: row " + std::to_string(i) + " has norm < 1e-12");
    out.row(i) /= norm;
  }
  return out;
}

// Pairwise inner products between unit-norm rows: entry (i, j) = <a_i, b_j>.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.cols())
    fail("dim_mismatch", "cosine_similarity: feature dims differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.cols()) + ")");
  require_unit_rows(a, "cosine_similarity lhs");
  require_unit_rows(b, "cosine_similarity rhs");
  return a * b.transpose();
}

// log(sum_k exp(v_k)) with max subtraction; fixed left-to-right reduction.
template <typename Scalar>
Scalar log_sum_exp(std::span<const Scalar> values) {
  if (values.empty()) fail("empty_list", "log_sum_exp: empty input");
  Scalar m = values[0];
  for (const Scalar v : values)
    if (v > m) m = v;
  Scalar sum = 0;
  for (const Scalar v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

template <typename Scalar>
Scalar log_sum_exp(const std::vector<Scalar>& values) {
  return log_sum_exp(std::span<const Scalar>(values));
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& values) {
  using S = typename Derived::Scalar;
  std::vector<S> tmp(values.size());
  for (Index i = 0; i < values.size(); ++i) tmp[static_cast<std::size_t>(i)] = values(i);
  return log_sum_exp(std::span<const S>(tmp));
}

}  // namespace mgce

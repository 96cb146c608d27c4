#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"
#include "mgce/rng.hpp"

namespace mgce {

struct EncoderConfig {
  std::vector<Index> layer_sizes;  // [D_in, hidden..., D_out]
  bool identity_mode = false;      // pass-through (normalize only), needs D_in == D_out

  void validate() const {
    if (layer_sizes.size() < 2)
      fail("config_invalid", "encoder: layer_sizes needs at least [D_in, D_out]");
    for (const Index s : layer_sizes)
      if (s < 1) fail("config_invalid", "encoder: layer sizes must be positive");
    if (identity_mode && layer_sizes.front() != layer_sizes.back())
      fail("config_invalid", "encoder: identity_mode requires D_in == D_out");
  }
};

// Feed-forward encoder with rectified-linear hidden activations and a
// unit-normalized output, trained by manual backprop. Parameters are kept
// as a flat list [W0, b0, W1, b1, ...] (biases as 1 x n matrices) so the
// optimizer can treat them uniformly.
template <typename Scalar = double>
class Encoder {
 public:
  Encoder() = default;

  Encoder(const EncoderConfig& cfg, Rng rng) : cfg_(cfg) {
    cfg.validate();
    if (cfg.identity_mode) return;
    // He-scaled gaussian weights, zero biases
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
      const Index in = cfg.layer_sizes[l];
      const Index out = cfg.layer_sizes[l + 1];
      MatrixX<Scalar> w(out, in);
      const Scalar scale = std::sqrt(Scalar(2) / Scalar(in));
      for (Index r = 0; r < out; ++r)
        for (Index c = 0; c < in; ++c) w(r, c) = scale * Scalar(rng.next_gaussian());
      params_.push_back(std::move(w));
      params_.push_back(MatrixX<Scalar>::Zero(1, out));
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  Index input_dim() const { return cfg_.layer_sizes.front(); }
  Index output_dim() const { return cfg_.layer_sizes.back(); }
  std::size_t num_layers() const { return params_.size() / 2; }

  std::vector<MatrixX<Scalar>>& params() { return params_; }
  const std::vector<MatrixX<Scalar>>& params() const { return params_; }

  // Jitters the raw rows (i.i.d. gaussian, sigma in raw-feature units),
  // applies the layer stack and unit-normalizes the result. Activations are
  // cached for backward(). rng may be null when sigma == 0.
  MatrixX<Scalar> forward(const MatrixX<Scalar>& raw, Scalar jitter_sigma, Rng* rng) {
    if (raw.cols() != input_dim())
      fail("dim_mismatch", "encoder forward: input dim " + std::to_string(raw.cols()) +
                               ", expected " + std::to_string(input_dim()));
    require_finite(raw, "encoder forward");

    cache_.activations.clear();
    MatrixX<Scalar> x = raw;
    if (jitter_sigma > Scalar(0)) {
      if (rng == nullptr) fail("config_invalid", "encoder forward: jitter needs an rng");
      for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j) x(i, j) += jitter_sigma * Scalar(rng->next_gaussian());
    }
    cache_.activations.push_back(x);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const MatrixX<Scalar>& w = params_[2 * l];
      const MatrixX<Scalar>& bias = params_[2 * l + 1];
      MatrixX<Scalar> z = x * w.transpose();
      z.rowwise() += bias.row(0);
      if (l + 1 < num_layers()) z = z.cwiseMax(Scalar(0));
      cache_.activations.push_back(z);
      x = cache_.activations.back();
    }
    cache_.prenorm = x;
    cache_.norms.resize(x.rows());
    cache_.output.resize(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const Scalar norm = x.row(i).norm();
      if (norm < Scalar(1e-12))
        fail("zero_row", "encoder forward: output row " + std::to_string(i) + " collapsed to zero");
      cache_.norms(i) = norm;
      cache_.output.row(i) = x.row(i) / norm;
    }
    cache_.valid = true;
    return cache_.output;
  }

  // Backpropagates an upstream gradient (w.r.t. the normalized output rows)
  // through the normalization, rectifier masks and linear layers. Returns
  // gradients aligned with params().
  std::vector<MatrixX<Scalar>> backward(const MatrixX<Scalar>& upstream) const {
    if (!cache_.valid) fail("no_cached_forward", "encoder backward: call forward first");
    if (upstream.rows() != cache_.output.rows() || upstream.cols() != cache_.output.cols())
      fail("shape_mismatch", "encoder backward: upstream gradient shape mismatch");

    // through y = z / |z|: g <- (g - (g . y) y) / |z|
    MatrixX<Scalar> g(upstream.rows(), upstream.cols());
    for (Index i = 0; i < upstream.rows(); ++i) {
      const auto y = cache_.output.row(i);
      const Scalar radial = upstream.row(i).dot(y);
      g.row(i) = (upstream.row(i) - radial * y) / cache_.norms(i);
    }

    std::vector<MatrixX<Scalar>> grads(params_.size());
    for (std::size_t l = num_layers(); l-- > 0;) {
      const MatrixX<Scalar>& w = params_[2 * l];
      const MatrixX<Scalar>& input = cache_.activations[l];
      grads[2 * l] = g.transpose() * input;
      grads[2 * l + 1] = g.colwise().sum();
      if (l > 0) {
        g = g * w;
        // rectifier mask of the producing layer's output
        const MatrixX<Scalar>& act = cache_.activations[l];
        g = ((act.array() > Scalar(0)).template cast<Scalar>() * g.array()).matrix();
      }
    }
    return grads;
  }

  bool has_cached_forward() const { return cache_.valid; }

 private:
  struct Cache {
    std::vector<MatrixX<Scalar>> activations;  // [input, post-activation per layer]
    MatrixX<Scalar> prenorm;
    VectorX<Scalar> norms;
    MatrixX<Scalar> output;
    bool valid = false;
  };

  EncoderConfig cfg_;
  std::vector<MatrixX<Scalar>> params_;
  mutable Cache cache_;

  template <typename S>
  friend Encoder<S> encoder_from_parts(const EncoderConfig&, std::vector<MatrixX<S>>);
};

// Rebuilds an encoder from deserialized parameters.
template <typename Scalar>
Encoder<Scalar> encoder_from_parts(const EncoderConfig& cfg, std::vector<MatrixX<Scalar>> params) {
  cfg.validate();
  Encoder<Scalar> enc;
  enc.cfg_ = cfg;
  if (cfg.identity_mode) {
    if (!params.empty()) fail("format_error", "identity encoder carries no parameters");
    return enc;
  }
  if (params.size() != 2 * (cfg.layer_sizes.size() - 1))
    fail("format_error", "encoder parameter count does not match layer_sizes");
  for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
    const Index in = cfg.layer_sizes[l];
    const Index out = cfg.layer_sizes[l + 1];
    if (params[2 * l].rows() != out || params[2 * l].cols() != in ||
        params[2 * l + 1].rows() != 1 || params[2 * l + 1].cols() != out)
      fail("format_error", "encoder parameter shapes do not match layer_sizes");
  }
  enc.params_ = std::move(params);
  return enc;
}

}  // namespace mgce

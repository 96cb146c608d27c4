#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mgce/core.hpp"
#include "mgce/error.hpp"

namespace mgce {

struct AdamConfig {
  double lr = 3.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled: parameter shrink before the step

  void validate() const {
    if (!(lr > 0.0)) fail("config_invalid", "adam: lr must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      fail("config_invalid", "adam: betas must lie in (0, 1)");
    if (!(eps > 0.0)) fail("config_invalid", "adam: eps must be > 0");
    if (weight_decay < 0.0) fail("config_invalid", "adam: weight_decay must be >= 0");
  }
};

// First/second moment estimates per parameter tensor plus the shared step
// counter.
template <typename Scalar = double>
struct AdamState {
  std::vector<MatrixX<Scalar>> m;
  std::vector<MatrixX<Scalar>> v;
  long step = 0;

  static AdamState like(const std::vector<MatrixX<Scalar>>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
      s.v.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
    }
    return s;
  }
};

// Decoupled weight decay followed by the bias-corrected Adam update.
template <typename Scalar>
void adam_step(std::vector<MatrixX<Scalar>>& params, const std::vector<MatrixX<Scalar>>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  cfg.validate();
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail("shape_mismatch", "adam: parameter/gradient/state counts differ");
  for (std::size_t p = 0; p < params.size(); ++p)
    if (params[p].rows() != grads[p].rows() || params[p].cols() != grads[p].cols())
      fail("shape_mismatch", "adam: tensor " + std::to_string(p) + " shape mismatch");

  state.step += 1;
  const Scalar lr = Scalar(cfg.lr);
  const Scalar b1 = Scalar(cfg.beta1);
  const Scalar b2 = Scalar(cfg.beta2);
  const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (cfg.weight_decay > 0.0) params[p] *= (Scalar(1) - lr * Scalar(cfg.weight_decay));
    state.m[p] = b1 * state.m[p] + (Scalar(1) - b1) * grads[p];
    state.v[p] = b2 * state.v[p] + (Scalar(1) - b2) * grads[p].cwiseProduct(grads[p]);
    const MatrixX<Scalar> m_hat = state.m[p] / c1;
    const MatrixX<Scalar> v_hat = state.v[p] / c2;
    params[p].array() -= lr * m_hat.array() / (v_hat.array().sqrt() + Scalar(cfg.eps));
  }
}

}  // namespace mgce

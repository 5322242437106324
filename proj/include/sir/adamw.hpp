// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "sir/config.hpp"
#include "sir/error.hpp"
#include "sir/scorer.hpp"

namespace sir {

/// First/second moments per parameter tensor and the step counter.
struct OptimizerState {
  ParamTensors m;
  ParamTensors v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ScorerParams& params) {
    OptimizerState s;
    const auto tensors = params.tensors();
    for (std::size_t i = 0; i < kNumParamTensors; ++i) {
      s.m[i] = nd::Tensor::zeros(tensors[i]->shape());
      s.v[i] = nd::Tensor::zeros(tensors[i]->shape());
    }
    return s;
  }
};

/// Elementwise AdamW on flat buffers for step number `t` (1-based).
inline void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                         std::span<double> v, std::uint64_t t, const OptimizerHyper& h) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= h.lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * p[i]);
  }
}

/// One AdamW update with decoupled weight decay. A non-finite gradient
/// aborts the step before anything is modified.
inline void adamw_step(ScorerParams& params, const ParamTensors& grads, OptimizerState& state,
                       const OptimizerHyper& hyper) {
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < kNumParamTensors; ++i) {
    if (grads[i].shape() != tensors[i]->shape() || state.m[i].shape() != tensors[i]->shape()) {
      throw DimensionError("adamw_step: shape mismatch for " + std::string(ScorerParams::names[i]));
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("adamw_step: non-finite gradient in " + std::string(ScorerParams::names[i]) +
                           " at index " + std::to_string(j) + " (step " +
                           std::to_string(state.step + 1) + ")");
      }
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < kNumParamTensors; ++i) {
    adamw_update(tensors[i]->values(), grads[i].values(), state.m[i].values(),
                         state.v[i].values(), state.step, hyper);
  }
}

}  // namespace sir

#pragma once

#include <optional>
#include <vector>

#include "radcls/layers.hpp"
#include "radcls/tensor.hpp"

namespace radcls {

// Row-wise softmax of (N, K) logits with max subtraction.
Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;  // d(mean loss)/d(logits) = (softmax - onehot) / N
};

// Mean cross-entropy over the batch. Labels must be 0 or 1.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);
LossResult cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels);

// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v. Velocity entries
// missing from `velocity` start at zero.
struct SgdState {
  TensorMap velocity;
};

struct SgdResult {
  TensorMap params;
  SgdState state;
};

SgdResult sgd_step(const TensorMap& params, const TensorMap& grads, double lr, double momentum, const SgdState& state);
// Same update applied in place; used by the training loop.
void sgd_step_inplace(TensorMap& params, const TensorMap& grads, double lr, double momentum, SgdState& state);

// Cosine annealing with linear warmup and warm restarts. Unset cycle/warmup
// lengths are resolved by the trainer from the epoch length.
struct ScheduleConfig {
  std::optional<int> cycle_steps;
  std::optional<int> warmup_steps;
  double lr_min = 1e-5;
  double cycle_mult = 1.0;
  double decay_gamma = 1.0;

  void validate() const;
};

// Cycle c has length L_c (L_0 = cycle_steps, L_{c+1} = warmup +
// floor((L_c - warmup) * cycle_mult)) and peak lr_max * decay_gamma^c. Inside
// a cycle the rate ramps linearly lr_min -> peak over warmup_steps, then
// follows lr_min + (peak - lr_min) * (1 + cos(pi * t / (L_c - warmup))) / 2.
double lr_at(long step, const ScheduleConfig& s, double lr_max);

}  // namespace radcls

#include "radcls/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "radcls/errors.hpp"

namespace radcls {

Tensor softmax(const Tensor& logits) {
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double m = logits[n * K];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, logits[n * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[n * K + k] - m);
    for (std::size_t k = 0; k < K; ++k) p[n * K + k] = std::exp(logits[n * K + k] - m) / z;
  }
  return p;
}

LossResult cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be (N, K)");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N)
    throw ValueError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(N) +
                     " rows");
  LossResult r;
  r.dlogits = Tensor(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || y > 1 || static_cast<std::size_t>(y) >= K)
      throw ValueError("cross_entropy: label " + std::to_string(y) + " at index " + std::to_string(n) +
                       " is not 0 or 1");
    double m = logits[n * K];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, logits[n * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[n * K + k] - m);
    const double log_z = m + std::log(z);
    r.loss += log_z - logits[n * K + y];
    for (std::size_t k = 0; k < K; ++k) {
      const double prob = std::exp(logits[n * K + k] - log_z);
      r.dlogits[n * K + k] = (prob - (static_cast<int>(k) == y ? 1.0 : 0.0)) / static_cast<double>(N);
    }
  }
  r.loss /= static_cast<double>(N);
  return r;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  return cross_entropy_with_grad(logits, labels).loss;
}

void sgd_step_inplace(TensorMap& params, const TensorMap& grads, double lr, double momentum, SgdState& state) {
  for (auto& [path, p] : params) {
    auto g = grads.find(path);
    if (g == grads.end()) continue;
    if (!g->second.same_shape(p))
      throw ShapeError("sgd_step: gradient for '" + path + "' has shape " + shape_string(g->second.shape()) +
                       ", parameter has " + shape_string(p.shape()));
    auto [v, inserted] = state.velocity.try_emplace(path, p.shape());
    if (!v->second.same_shape(p)) throw ShapeError("sgd_step: velocity for '" + path + "' has the wrong shape");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v->second[i] = momentum * v->second[i] + g->second[i];
      p[i] -= lr * v->second[i];
    }
  }
  for (const auto& [path, g] : grads)
    if (!params.count(path)) throw ShapeError("sgd_step: gradient for unknown parameter '" + path + "'");
}

SgdResult sgd_step(const TensorMap& params, const TensorMap& grads, double lr, double momentum, const SgdState& state) {
  SgdResult r{params, state};
  sgd_step_inplace(r.params, grads, lr, momentum, r.state);
  return r;
}

void ScheduleConfig::validate() const {
  if (cycle_steps && *cycle_steps < 1) throw ConfigError("schedule.cycle_steps must be positive");
  if (warmup_steps && *warmup_steps < 0) throw ConfigError("schedule.warmup_steps must be non-negative");
  if (cycle_steps && warmup_steps && *warmup_steps >= *cycle_steps)
    throw ConfigError("schedule.warmup_steps must be smaller than schedule.cycle_steps");
  if (!(lr_min >= 0.0)) throw ConfigError("schedule.lr_min must be non-negative");
  if (!(cycle_mult >= 1.0)) throw ConfigError("schedule.cycle_mult must be at least 1");
  if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) throw ConfigError("schedule.decay_gamma must be in (0,1]");
}

double lr_at(long step, const ScheduleConfig& s, double lr_max) {
  if (!s.cycle_steps) throw ConfigError("lr_at: schedule.cycle_steps is unresolved");
  const long warmup = s.warmup_steps.value_or(0);
  long cycle_len = *s.cycle_steps;
  long t = std::max(0L, step);
  double peak = lr_max;
  while (t >= cycle_len) {
    t -= cycle_len;
    cycle_len = warmup + static_cast<long>(std::floor(static_cast<double>(cycle_len - warmup) * s.cycle_mult));
    peak *= s.decay_gamma;
  }
  // A decayed peak below lr_min pulls the floor down with it.
  const double floor_lr = std::min(s.lr_min, peak);
  if (t < warmup) return floor_lr + (peak - floor_lr) * static_cast<double>(t) / static_cast<double>(warmup);
  const double frac = static_cast<double>(t - warmup) / static_cast<double>(cycle_len - warmup);
  return floor_lr + 0.5 * (peak - floor_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace radcls

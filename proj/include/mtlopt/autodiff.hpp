#pragma once

#include <vector>

#include "mtlopt/model.hpp"
#include "mtlopt/param.hpp"

namespace mtlopt {

// Per-task mean-squared-error losses: L_t = mean over (batch, output dim)
// of (prediction - target)^2.
std::vector<double> forward_losses(const MtlModel& model, const TaskBatch& batch);

// Per-task head outputs for an input batch (no targets involved).
std::vector<Tensor> predict_heads(const MtlModel& model, const Tensor& inputs);

struct TaskGradients {
  std::vector<double> losses;             // per-task loss at the probed point
  TaskGradientSet shared;                 // row t = d L_t / d theta_sha
  std::vector<std::vector<double>> heads; // task t -> flat d L_t / d theta_sep^t
};

// Exact reverse-mode gradients; deterministic for fixed (model, batch).
TaskGradients task_gradients(const MtlModel& model, const TaskBatch& batch);

// theta_sha -= lr * direction; head t -= lr * head_dirs[t]. Heads update at
// full density; sparsity only ever enters through `direction` being masked.
void apply_update(MtlModel& model, const ParamVector& direction,
                  const std::vector<std::vector<double>>& head_dirs, double lr);

}  // namespace mtlopt

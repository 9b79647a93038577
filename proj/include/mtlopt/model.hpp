#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtlopt/param.hpp"
#include "mtlopt/tensor.hpp"

namespace mtlopt {

enum class Activation { kIdentity, kTanh };

struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;  // row-major [fan_out x fan_in]
  std::vector<double> bias;     // [fan_out]
  Activation activation = Activation::kIdentity;

  double& w(std::size_t out, std::size_t in) { return weights[out * fan_in + in]; }
  double w(std::size_t out, std::size_t in) const { return weights[out * fan_in + in]; }
};

// Hard-sharing MTL model: the trunk holds theta_sha, one dense head per
// task holds theta_sep^t. Heads always use the identity activation so the
// per-task losses stay smooth polynomials of the head outputs.
struct MtlModel {
  std::vector<DenseLayer> trunk;
  std::vector<DenseLayer> heads;
  ParamLayout layout;

  std::size_t task_count() const { return heads.size(); }
  std::size_t input_dim() const { return trunk.front().fan_in; }
  std::size_t trunk_out_dim() const { return trunk.back().fan_out; }
};

struct TaskBatch {
  Tensor inputs;                // [B x d_in]
  std::vector<Tensor> targets;  // per task, [B x d_out_t]

  std::size_t batch_size() const { return inputs.rows(); }
  std::size_t task_count() const { return targets.size(); }
};

ParamLayout build_layout(const std::vector<DenseLayer>& trunk,
                         const std::vector<DenseLayer>& heads);

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
// All heads draw from one restarted stream, so heads with equal shapes
// start identical; T identical tasks then stay bit-identical throughout
// training.
MtlModel make_mtl_model(std::size_t d_in, const std::vector<std::size_t>& trunk_widths,
                        const std::vector<std::size_t>& head_dims,
                        Activation trunk_activation, std::uint64_t seed);

ParamVector flatten_shared(const MtlModel& model);
void unflatten_shared(MtlModel& model, const ParamVector& values);

std::vector<double> flatten_head(const DenseLayer& head);

void validate_batch(const MtlModel& model, const TaskBatch& batch);

}  // namespace mtlopt

#include "mtlopt/autodiff.hpp"

#include <cmath>
#include <string>

#include "mtlopt/errors.hpp"

namespace mtlopt {

namespace {

// Z = A W^T + b, with A [B x in], W row-major [out x in].
void affine_forward(const std::vector<double>& a, std::size_t batch,
                    const DenseLayer& layer, std::vector<double>& z) {
  const std::size_t in = layer.fan_in;
  const std::size_t out = layer.fan_out;
  z.assign(batch * out, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* arow = a.data() + b * in;
    double* zrow = z.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = layer.weights.data() + o * in;
      double acc = layer.bias[o];
      for (std::size_t k = 0; k < in; ++k) acc += arow[k] * wrow[k];
      zrow[o] = acc;
    }
  }
}

void apply_activation(Activation act, std::vector<double>& z) {
  if (act == Activation::kTanh) {
    for (double& v : z) v = std::tanh(v);
  }
}

// dW[o][k] += sum_b dZ[b][o] * A[b][k]
void accumulate_weight_grad(const std::vector<double>& dz, const std::vector<double>& a,
                            std::size_t batch, std::size_t out, std::size_t in,
                            std::vector<double>& dw) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dzrow = dz.data() + b * out;
    const double* arow = a.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double coef = dzrow[o];
      if (coef == 0.0) continue;
      double* dwrow = dw.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) dwrow[k] += coef * arow[k];
    }
  }
}

// dA[b][k] = sum_o dZ[b][o] * W[o][k]
void input_grad(const std::vector<double>& dz, const DenseLayer& layer,
                std::size_t batch, std::vector<double>& da) {
  const std::size_t in = layer.fan_in;
  const std::size_t out = layer.fan_out;
  da.assign(batch * in, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dzrow = dz.data() + b * out;
    double* darow = da.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double coef = dzrow[o];
      if (coef == 0.0) continue;
      const double* wrow = layer.weights.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) darow[k] += coef * wrow[k];
    }
  }
}

void check_layer_finite(const std::vector<double>& values, std::size_t layer_id) {
  for (double v : values) {
    if (!std::isfinite(v))
      throw NumericError("non-finite value in trunk layer " + std::to_string(layer_id));
  }
}

// Runs the trunk and keeps per-layer activations for the backward pass.
// activations[0] is the input batch, activations[l+1] the output of layer l.
std::vector<std::vector<double>> trunk_forward(const MtlModel& model,
                                               const TaskBatch& batch) {
  const std::size_t bsz = batch.batch_size();
  std::vector<std::vector<double>> activations;
  activations.reserve(model.trunk.size() + 1);
  activations.push_back(batch.inputs.data);
  for (std::size_t l = 0; l < model.trunk.size(); ++l) {
    std::vector<double> z;
    affine_forward(activations.back(), bsz, model.trunk[l], z);
    check_layer_finite(z, l);  // before tanh, which would mask an overflow
    apply_activation(model.trunk[l].activation, z);
    activations.push_back(std::move(z));
  }
  return activations;
}

double head_forward(const DenseLayer& head, const std::vector<double>& features,
                    const Tensor& target, std::size_t bsz,
                    std::vector<double>& prediction) {
  affine_forward(features, bsz, head, prediction);
  const std::size_t n = prediction.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = prediction[i] - target.data[i];
    loss += diff * diff;
  }
  return loss / static_cast<double>(n);
}

}  // namespace

std::vector<double> forward_losses(const MtlModel& model, const TaskBatch& batch) {
  validate_batch(model, batch);
  const std::size_t bsz = batch.batch_size();
  const auto activations = trunk_forward(model, batch);
  const std::vector<double>& features = activations.back();

  std::vector<double> losses(model.task_count());
  std::vector<double> prediction;
  for (std::size_t t = 0; t < model.task_count(); ++t) {
    losses[t] = head_forward(model.heads[t], features, batch.targets[t], bsz, prediction);
    if (!std::isfinite(losses[t]))
      throw NumericError("non-finite loss for task " + std::to_string(t));
  }
  return losses;
}

std::vector<Tensor> predict_heads(const MtlModel& model, const Tensor& inputs) {
  if (inputs.cols() != model.input_dim())
    throw ConfigError("predict_heads: input dim mismatch");
  const std::size_t bsz = inputs.rows();
  TaskBatch probe;
  probe.inputs = inputs;
  const auto activations = trunk_forward(model, probe);
  const std::vector<double>& features = activations.back();

  std::vector<Tensor> out;
  out.reserve(model.task_count());
  std::vector<double> prediction;
  for (const DenseLayer& head : model.heads) {
    affine_forward(features, bsz, head, prediction);
    out.emplace_back(std::vector<std::size_t>{bsz, head.fan_out}, prediction);
  }
  return out;
}

TaskGradients task_gradients(const MtlModel& model, const TaskBatch& batch) {
  validate_batch(model, batch);
  const std::size_t bsz = batch.batch_size();
  const std::size_t n_tasks = model.task_count();
  const auto activations = trunk_forward(model, batch);
  const std::vector<double>& features = activations.back();

  TaskGradients grads;
  grads.losses.resize(n_tasks);
  grads.shared = TaskGradientSet(n_tasks, model.layout.total_shared);
  grads.heads.resize(n_tasks);

  std::vector<double> prediction, dpred, da, dz;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const DenseLayer& head = model.heads[t];
    affine_forward(features, bsz, head, prediction);

    // d loss / d prediction for MSE with mean over batch and output dims.
    const std::size_t n = prediction.size();
    const double scale = 2.0 / static_cast<double>(n);
    dpred.resize(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = prediction[i] - batch.targets[t].data[i];
      loss += diff * diff;
      dpred[i] = scale * diff;
    }
    grads.losses[t] = loss / static_cast<double>(n);
    if (!std::isfinite(grads.losses[t]))
      throw NumericError("non-finite loss for task " + std::to_string(t));

    // Head gradient (full density).
    std::vector<double> head_grad(head.weights.size() + head.bias.size(), 0.0);
    accumulate_weight_grad(dpred, features, bsz, head.fan_out, head.fan_in, head_grad);
    double* db_head = head_grad.data() + head.weights.size();
    for (std::size_t b = 0; b < bsz; ++b) {
      const double* row = dpred.data() + b * head.fan_out;
      for (std::size_t o = 0; o < head.fan_out; ++o) db_head[o] += row[o];
    }
    grads.heads[t] = std::move(head_grad);

    // Backprop through the trunk into row t of the shared gradient set.
    input_grad(dpred, head, bsz, da);
    auto shared_row = grads.shared.row(t);
    for (std::size_t li = model.trunk.size(); li-- > 0;) {
      const DenseLayer& layer = model.trunk[li];
      const std::vector<double>& out_act = activations[li + 1];
      const std::vector<double>& in_act = activations[li];

      dz.resize(da.size());
      if (layer.activation == Activation::kTanh) {
        for (std::size_t i = 0; i < da.size(); ++i)
          dz[i] = da[i] * (1.0 - out_act[i] * out_act[i]);
      } else {
        dz = da;
      }

      // Locate this layer's slices in the flat layout (two entries per layer).
      const LayoutEntry& we = model.layout.entries[2 * li];
      const LayoutEntry& be = model.layout.entries[2 * li + 1];
      std::vector<double> dw(layer.weights.size(), 0.0);
      accumulate_weight_grad(dz, in_act, bsz, layer.fan_out, layer.fan_in, dw);
      for (std::size_t i = 0; i < dw.size(); ++i) shared_row[we.offset + i] = dw[i];
      for (std::size_t b = 0; b < bsz; ++b) {
        const double* row = dz.data() + b * layer.fan_out;
        for (std::size_t o = 0; o < layer.fan_out; ++o)
          shared_row[be.offset + o] += row[o];
      }

      if (li > 0) input_grad(dz, layer, bsz, da);
    }

    if (!all_finite(shared_row))
      throw NumericError("non-finite shared gradient for task " + std::to_string(t));
  }
  return grads;
}

void apply_update(MtlModel& model, const ParamVector& direction,
                  const std::vector<std::vector<double>>& head_dirs, double lr) {
  if (direction.size() != model.layout.total_shared)
    throw ConfigError("apply_update: direction length mismatch");
  if (head_dirs.size() != model.task_count())
    throw ConfigError("apply_update: head direction count mismatch");

  std::size_t pos = 0;
  for (DenseLayer& layer : model.trunk) {
    for (double& w : layer.weights) {
      w -= lr * direction[pos];
      ++pos;
    }
    for (double& b : layer.bias) {
      b -= lr * direction[pos];
      ++pos;
    }
  }
  for (std::size_t t = 0; t < model.task_count(); ++t) {
    DenseLayer& head = model.heads[t];
    const std::vector<double>& dir = head_dirs[t];
    if (dir.size() != head.weights.size() + head.bias.size())
      throw ConfigError("apply_update: head direction length mismatch for task " +
                        std::to_string(t));
    std::size_t hp = 0;
    for (double& w : head.weights) w -= lr * dir[hp++];
    for (double& b : head.bias) b -= lr * dir[hp++];
  }
}

}  // namespace mtlopt

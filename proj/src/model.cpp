#include "mtlopt/model.hpp"

#include <cmath>

#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

ParamLayout build_layout(const std::vector<DenseLayer>& trunk,
                         const std::vector<DenseLayer>& heads) {
  ParamLayout layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < trunk.size(); ++l) {
    const DenseLayer& layer = trunk[l];
    layout.entries.push_back({l, ParamKind::kWeight, offset,
                              layer.weights.size(), layer.fan_out, layer.fan_in});
    offset += layer.weights.size();
    layout.entries.push_back({l, ParamKind::kBias, offset, layer.bias.size(),
                              layer.fan_out, layer.fan_in});
    offset += layer.bias.size();
  }
  layout.total_shared = offset;
  for (const DenseLayer& head : heads)
    layout.total_per_head.push_back(head.weights.size() + head.bias.size());
  return layout;
}

namespace {

DenseLayer init_layer(std::size_t fan_in, std::size_t fan_out, Activation act,
                      Rng& rng) {
  DenseLayer layer;
  layer.fan_in = fan_in;
  layer.fan_out = fan_out;
  layer.activation = act;
  layer.weights.resize(fan_in * fan_out);
  layer.bias.assign(fan_out, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  return layer;
}

}  // namespace

MtlModel make_mtl_model(std::size_t d_in, const std::vector<std::size_t>& trunk_widths,
                        const std::vector<std::size_t>& head_dims,
                        Activation trunk_activation, std::uint64_t seed) {
  if (d_in == 0) throw ConfigError("make_mtl_model: d_in must be positive");
  if (trunk_widths.empty())
    throw ConfigError("make_mtl_model: trunk needs at least one layer");
  if (head_dims.empty()) throw ConfigError("make_mtl_model: need at least one head");

  MtlModel model;
  Rng trunk_rng(derive_seed(seed, seed_stream::kTrunkInit));
  std::size_t in = d_in;
  for (std::size_t width : trunk_widths) {
    if (width == 0) throw ConfigError("make_mtl_model: zero trunk width");
    model.trunk.push_back(init_layer(in, width, trunk_activation, trunk_rng));
    in = width;
  }
  for (std::size_t d_out : head_dims) {
    if (d_out == 0) throw ConfigError("make_mtl_model: zero head dim");
    Rng head_rng(derive_seed(seed, seed_stream::kHeadInit));
    model.heads.push_back(init_layer(in, d_out, Activation::kIdentity, head_rng));
  }
  model.layout = build_layout(model.trunk, model.heads);
  return model;
}

ParamVector flatten_shared(const MtlModel& model) {
  ParamVector out;
  out.values.reserve(model.layout.total_shared);
  for (const DenseLayer& layer : model.trunk) {
    out.values.insert(out.values.end(), layer.weights.begin(), layer.weights.end());
    out.values.insert(out.values.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

void unflatten_shared(MtlModel& model, const ParamVector& values) {
  if (values.size() != model.layout.total_shared)
    throw ConfigError("unflatten_shared: length mismatch");
  std::size_t pos = 0;
  for (DenseLayer& layer : model.trunk) {
    for (double& w : layer.weights) w = values[pos++];
    for (double& b : layer.bias) b = values[pos++];
  }
}

std::vector<double> flatten_head(const DenseLayer& head) {
  std::vector<double> out;
  out.reserve(head.weights.size() + head.bias.size());
  out.insert(out.end(), head.weights.begin(), head.weights.end());
  out.insert(out.end(), head.bias.begin(), head.bias.end());
  return out;
}

void validate_batch(const MtlModel& model, const TaskBatch& batch) {
  if (batch.inputs.rows() == 0)
    throw ConfigError("batch: batch size must be >= 1");
  if (batch.inputs.cols() != model.input_dim())
    throw ConfigError("batch: input dim does not match model");
  if (batch.targets.size() != model.task_count())
    throw ConfigError("batch: target count does not match task count");
  for (std::size_t t = 0; t < batch.targets.size(); ++t) {
    if (batch.targets[t].rows() != batch.inputs.rows())
      throw ConfigError("batch: target batch size mismatch for task " +
                        std::to_string(t));
    if (batch.targets[t].cols() != model.heads[t].fan_out)
      throw ConfigError("batch: target dim mismatch for task " + std::to_string(t));
  }
}

}  // namespace mtlopt

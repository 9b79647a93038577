#include "mtlopt/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>

#include "mtlopt/autodiff.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

std::string to_string(MaskStage s) {
  return s == MaskStage::kPostCombine ? "post_combine" : "pre_combine";
}

MaskStage mask_stage_from_string(const std::string& s) {
  if (s == "post_combine") return MaskStage::kPostCombine;
  if (s == "pre_combine") return MaskStage::kPreCombine;
  throw ConfigError("unknown mask_stage '" + s + "'");
}

void RunConfig::validate() const {
  benchmark.validate();
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (batch > benchmark.samples)
    throw ConfigError("batch must not exceed samples");
  if (mask_variant == MaskVariant::kPsn || mask_variant == MaskVariant::kReverse) {
    if (mask_k < 1) throw ConfigError("mask_k must be >= 1");
  }
  if (mask_variant == MaskVariant::kRandom || mask_variant == MaskVariant::kGlobal) {
    if (!(mask_fraction > 0.0 && mask_fraction <= 1.0))
      throw ConfigError("mask_fraction must be in (0, 1]");
  }
  if (combiner.cagrad_c < 0.0) throw ConfigError("cagrad_c must be >= 0");
  if (combiner.graddrop_leak < 0.0 || combiner.graddrop_leak > 1.0)
    throw ConfigError("graddrop_leak must be in [0, 1]");
  if (combiner.cagrad_iters < 1) throw ConfigError("cagrad_iters must be >= 1");
  if (combiner.mgda_iters < 1) throw ConfigError("mgda_iters must be >= 1");
  if (combiner.nashmtl_iters < 1) throw ConfigError("nashmtl_iters must be >= 1");
  if (combiner.nashmtl_eps <= 0.0) throw ConfigError("nashmtl_eps must be positive");
}

namespace {

bool bits_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

std::vector<TaskBatch> make_batches(const TaskBatch& data, std::size_t batch) {
  const std::size_t count = data.batch_size() / batch;
  std::vector<TaskBatch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(slice_batch(data, i * batch, batch));
  return out;
}

std::vector<double> eval_losses(const MtlModel& model, const TaskBatch& eval) {
  const std::vector<Tensor> preds = predict_heads(model, eval.inputs);
  std::vector<double> out(preds.size());
  for (std::size_t t = 0; t < preds.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < preds[t].data.size(); ++i) {
      const double diff = preds[t].data[i] - eval.targets[t].data[i];
      acc += diff * diff;
    }
    out[t] = acc / static_cast<double>(preds[t].data.size());
  }
  return out;
}

void check_frozen(const MtlModel& model, const Mask& mask,
                  const ParamVector& theta_init, std::size_t epoch) {
  const ParamVector now = flatten_shared(model);
  for (std::size_t i = 0; i < now.size(); ++i) {
    if (!mask.selected(i) && !bits_equal(now[i], theta_init[i]))
      throw IntegrityError("frozen shared parameter " + std::to_string(i) +
                           " drifted from its initial value at epoch " +
                           std::to_string(epoch));
  }
}

}  // namespace

TrainOutput train(const RunConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  const Benchmark bench = generate_benchmark(config.benchmark);
  MtlModel model =
      make_mtl_model(config.benchmark.d_in, config.benchmark.trunk_widths,
                     config.benchmark.head_dims(), config.benchmark.activation,
                     config.seed);
  Mask mask = build_mask(model, config.mask_variant, config.mask_k,
                         config.mask_fraction, config.seed);
  const ParamVector theta_init = flatten_shared(model);

  const std::vector<TaskBatch> batches = make_batches(bench.train_data, config.batch);
  const std::size_t iters = batches.size();
  const std::size_t n_tasks = config.benchmark.tasks;
  const std::size_t pairs = n_tasks * (n_tasks - 1) / 2;
  const std::size_t n_epochs = config.epochs;

  TrainOutput out{.report = {}, .mask = mask, .final_model = {}, .raw_records = {},
                  .masked_records = {}, .epoch_rows = {}};
  out.raw_records.reserve(n_epochs * iters * pairs);
  out.masked_records.reserve(n_epochs * iters * pairs);

  std::map<std::string, double> diag_sums;
  double fallback_steps = 0.0;
  std::size_t combine_calls = 0;

  TaskGradientSet masked_rows;
  for (std::size_t epoch = 1; epoch <= n_epochs; ++epoch) {
    std::vector<double> loss_sum(n_tasks, 0.0);
    std::size_t raw_gc = 0;
    std::size_t masked_gc = 0;

    for (std::size_t it = 1; it <= iters; ++it) {
      TaskGradients grads;
      try {
        grads = task_gradients(model, batches[it - 1]);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " iteration " +
                           std::to_string(it) + ": " + e.what());
      }
      for (std::size_t t = 0; t < n_tasks; ++t) loss_sum[t] += grads.losses[t];

      masked_rows = grads.shared;
      for (std::size_t t = 0; t < n_tasks; ++t)
        apply_mask_in_place(mask, masked_rows.row(t));

      // Conflict telemetry on both gradient streams.
      for (std::size_t i = 0; i + 1 < n_tasks; ++i) {
        for (std::size_t j = i + 1; j < n_tasks; ++j) {
          const ConflictResult raw =
              detect_conflict(grads.shared.row(i), grads.shared.row(j));
          out.raw_records.push_back({epoch, it, i, j, raw.cosine, raw.conflict});
          raw_gc += raw.conflict ? 1 : 0;
          const ConflictResult msk =
              detect_conflict(masked_rows.row(i), masked_rows.row(j));
          out.masked_records.push_back({epoch, it, i, j, msk.cosine, msk.conflict});
          masked_gc += msk.conflict ? 1 : 0;
        }
      }

      const std::uint64_t step_seed =
          derive_seed(config.seed, (epoch - 1) * iters + it);
      const TaskGradientSet& combiner_input =
          config.mask_stage == MaskStage::kPreCombine ? masked_rows : grads.shared;
      CombineResult combined =
          combine(config.method, combiner_input, step_seed, config.combiner);
      for (const auto& [key, value] : combined.diagnostics) diag_sums[key] += value;
      fallback_steps += combined.fallback ? 1.0 : 0.0;
      ++combine_calls;

      apply_mask_in_place(mask, combined.direction.values);
      apply_update(model, combined.direction, grads.heads, config.lr);
    }

    EpochRow row;
    row.epoch = epoch;
    row.task_loss.resize(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t)
      row.task_loss[t] = loss_sum[t] / static_cast<double>(iters);
    row.p_epoch_raw = 100.0 * static_cast<double>(raw_gc) /
                      static_cast<double>(iters * pairs);
    row.p_epoch_masked = 100.0 * static_cast<double>(masked_gc) /
                         static_cast<double>(iters * pairs);
    out.epoch_rows.push_back(std::move(row));

    check_frozen(model, mask, theta_init, epoch);
  }

  RunReport& report = out.report;
  report.tasks = n_tasks;
  report.epochs = n_epochs;
  report.iterations_per_epoch = iters;
  report.mask_total = mask.total();
  report.mask_selected = mask.selected_count();

  const IncidenceSummary raw_sum = incidence(out.raw_records, n_epochs, iters, n_tasks);
  const IncidenceSummary masked_sum =
      incidence(out.masked_records, n_epochs, iters, n_tasks);
  report.p_all_raw = raw_sum.p_all;
  report.p_last_half_raw = raw_sum.p_last_half;
  report.p_all_masked = masked_sum.p_all;
  report.p_last_half_masked = masked_sum.p_last_half;
  // Headline stream: the gradients that actually drive the update.
  const bool sparse = config.mask_variant != MaskVariant::kDense;
  report.p_all = sparse ? masked_sum.p_all : raw_sum.p_all;
  report.p_last_half = sparse ? masked_sum.p_last_half : raw_sum.p_last_half;

  report.final_train_loss = out.epoch_rows.back().task_loss;
  const std::size_t tail =
      std::max<std::size_t>(1, (n_epochs + 9) / 10);  // last 10% of epochs
  report.last_tenth_train_loss.assign(n_tasks, 0.0);
  for (std::size_t e = n_epochs - tail; e < n_epochs; ++e) {
    for (std::size_t t = 0; t < n_tasks; ++t)
      report.last_tenth_train_loss[t] += out.epoch_rows[e].task_loss[t];
  }
  for (double& v : report.last_tenth_train_loss) v /= static_cast<double>(tail);

  report.eval_loss = eval_losses(model, bench.eval_data);

  if (config.run_stl) {
    report.stl_eval_loss = run_stl_baselines(bench, config);
    DeltaMInput dm;
    dm.per_task.resize(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t)
      dm.per_task[t].push_back(
          {report.eval_loss[t], report.stl_eval_loss[t], /*higher_is_better=*/false});
    report.delta_m_pct = delta_m(dm);
    report.has_delta_m = true;
  }

  for (const auto& [key, value] : diag_sums)
    report.combiner_diagnostics[key] = value / static_cast<double>(combine_calls);
  report.combiner_fallback_steps = fallback_steps;

  out.final_model = std::move(model);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<double> run_stl_baselines(const Benchmark& bench, const RunConfig& config) {
  const std::size_t n_tasks = config.benchmark.tasks;
  const auto head_dims = config.benchmark.head_dims();
  std::vector<double> metrics(n_tasks, 0.0);

  for (std::size_t task = 0; task < n_tasks; ++task) {
    // Same trunk architecture and init seed as the MTL student, one head.
    MtlModel model = make_mtl_model(config.benchmark.d_in, config.benchmark.trunk_widths,
                                    {head_dims[task]}, config.benchmark.activation,
                                    config.seed);
    TaskBatch single;
    single.inputs = bench.train_data.inputs;
    single.targets = {bench.train_data.targets[task]};
    const std::vector<TaskBatch> batches = make_batches(single, config.batch);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      for (const TaskBatch& b : batches) {
        const TaskGradients grads = task_gradients(model, b);
        ParamVector direction;
        direction.values.assign(grads.shared.row(0).begin(),
                                grads.shared.row(0).end());
        apply_update(model, direction, grads.heads, config.lr);
      }
    }

    TaskBatch eval_single;
    eval_single.inputs = bench.eval_data.inputs;
    eval_single.targets = {bench.eval_data.targets[task]};
    metrics[task] = eval_losses(model, eval_single)[0];
  }
  return metrics;
}

std::vector<TaylorRow> taylor_probe(const MtlModel& model, const TaskBatch& batch,
                                    std::size_t task_i, std::size_t task_j,
                                    const std::vector<double>& alphas) {
  if (task_i >= model.task_count() || task_j >= model.task_count())
    throw ConfigError("taylor_probe: task index out of range");
  const TaskGradients grads = task_gradients(model, batch);
  const double gij = dot(grads.shared.row(task_i), grads.shared.row(task_j));
  const double loss_before = grads.losses[task_j];

  std::vector<std::vector<double>> zero_heads;
  for (const DenseLayer& head : model.heads)
    zero_heads.emplace_back(head.weights.size() + head.bias.size(), 0.0);

  std::vector<TaylorRow> rows;
  rows.reserve(alphas.size());
  for (double alpha : alphas) {
    MtlModel stepped = model;
    ParamVector direction;
    direction.values.assign(grads.shared.row(task_i).begin(),
                            grads.shared.row(task_i).end());
    apply_update(stepped, direction, zero_heads, alpha);
    const double loss_after = forward_losses(stepped, batch)[task_j];

    TaylorRow row;
    row.alpha = alpha;
    row.actual_delta = loss_after - loss_before;
    row.predicted_delta = -alpha * gij;
    row.residual = std::fabs(row.actual_delta - row.predicted_delta);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mtlopt

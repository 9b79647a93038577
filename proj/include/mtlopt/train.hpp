#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtlopt/combiners.hpp"
#include "mtlopt/mask.hpp"
#include "mtlopt/metrics.hpp"
#include "mtlopt/synthetic.hpp"

namespace mtlopt {

enum class MaskStage { kPostCombine, kPreCombine };

std::string to_string(MaskStage s);
MaskStage mask_stage_from_string(const std::string& s);

struct RunConfig {
  SyntheticTaskSpec benchmark;
  Method method = Method::kJoint;
  MaskVariant mask_variant = MaskVariant::kDense;
  std::size_t mask_k = 12;
  double mask_fraction = 0.3;
  // post_combine applies M to the combined direction (the update rule as
  // written); pre_combine feeds already-masked gradients to the combiner.
  // The mask is applied to the final direction in both stages.
  MaskStage mask_stage = MaskStage::kPostCombine;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  CombinerParams combiner;
  bool run_stl = true;
  std::string out_dir = "out";

  void validate() const;
};

struct EpochRow {
  std::size_t epoch = 0;              // 1-based
  std::vector<double> task_loss;      // mean train loss per task this epoch
  double p_epoch_raw = 0.0;
  double p_epoch_masked = 0.0;
};

// Scalar summary of one run; serialized to report.json by the cli layer.
struct RunReport {
  std::size_t tasks = 0;
  std::size_t epochs = 0;
  std::size_t iterations_per_epoch = 0;
  std::size_t mask_total = 0;
  std::size_t mask_selected = 0;
  double p_all = 0.0;        // headline: masked stream under ST, raw when dense
  double p_last_half = 0.0;
  double p_all_raw = 0.0;
  double p_last_half_raw = 0.0;
  double p_all_masked = 0.0;
  double p_last_half_masked = 0.0;
  std::vector<double> final_train_loss;       // final-epoch mean per task
  std::vector<double> last_tenth_train_loss;  // mean over the last 10% epochs
  std::vector<double> eval_loss;              // final parameters, eval split
  std::vector<double> stl_eval_loss;          // empty when STL was skipped
  double delta_m_pct = 0.0;                   // meaningful iff has_delta_m
  bool has_delta_m = false;
  std::map<std::string, double> combiner_diagnostics;  // per-step means
  double combiner_fallback_steps = 0.0;
  double wall_time_s = 0.0;
};

struct TrainOutput {
  RunReport report;
  Mask mask;
  MtlModel final_model;
  std::vector<ConflictRecord> raw_records;
  std::vector<ConflictRecord> masked_records;
  std::vector<EpochRow> epoch_rows;
};

// Full training run: conflict telemetry on raw and masked gradients every
// iteration, masked updates, frozen-parameter integrity checked every epoch,
// and (unless disabled) the per-task single-task baselines for delta_m.
TrainOutput train(const RunConfig& config);

// One single-head model per task, same trunk architecture and training
// budget; returns the per-task eval losses that feed delta_m.
std::vector<double> run_stl_baselines(const Benchmark& bench, const RunConfig& config);

struct TaylorRow {
  double alpha = 0.0;
  double actual_delta = 0.0;     // L_j after the step minus before
  double predicted_delta = 0.0;  // -alpha * g_i . g_j
  double residual = 0.0;
};

// First-order probe: steps the shared parameters along task i's gradient and
// compares the realized change of task j's loss with the linear prediction.
std::vector<TaylorRow> taylor_probe(const MtlModel& model, const TaskBatch& batch,
                                    std::size_t task_i, std::size_t task_j,
                                    const std::vector<double>& alphas);

}  // namespace mtlopt

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mtlopt {

struct ConflictResult {
  double cosine = 0.0;
  bool conflict = false;
};

// cos of the angle between two task gradients; conflict iff strictly
// negative. A zero-norm gradient yields cosine 0 and no conflict.
ConflictResult detect_conflict(std::span<const double> g_i, std::span<const double> g_j);

// One observation per unordered task pair per iteration.
struct ConflictRecord {
  std::size_t epoch = 0;      // 1-based
  std::size_t iteration = 0;  // 1-based within the epoch
  std::size_t task_i = 0;
  std::size_t task_j = 0;  // task_i < task_j
  double cosine = 0.0;
  bool conflict = false;
};

struct IncidenceSummary {
  double p_all = 0.0;
  double p_last_half = 0.0;
  std::size_t epochs = 0;
  std::size_t iterations_per_epoch = 0;
  std::size_t tasks = 0;
};

// p% = 100 / (E I) * sum over iterations of N_gc / C(T,2), computed with
// integer accumulation so the division happens once. p_last_half covers
// the epochs strictly after ceil(E/2); for E = 1 that window is empty and
// p_last_half falls back to p_all.
IncidenceSummary incidence(const std::vector<ConflictRecord>& records,
                           std::size_t epochs, std::size_t iterations_per_epoch,
                           std::size_t tasks);

struct MetricObservation {
  double baseline = 0.0;  // M_b
  double stl = 0.0;       // M_s, must be nonzero
  bool higher_is_better = false;
};

struct DeltaMInput {
  std::vector<std::vector<MetricObservation>> per_task;  // non-empty per task
};

// Relative task drop versus single-task baselines:
// (1/T sum_t 1/K_t sum_k (-1)^{delta_k} (M_b - M_s) / M_s) * 100.
double delta_m(const DeltaMInput& input);

}  // namespace mtlopt

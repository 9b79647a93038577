#include "mtlopt/metrics.hpp"

#include <cmath>
#include <string>

#include "mtlopt/errors.hpp"
#include "mtlopt/param.hpp"

namespace mtlopt {

ConflictResult detect_conflict(std::span<const double> g_i,
                               std::span<const double> g_j) {
  if (g_i.size() != g_j.size())
    throw ConfigError("detect_conflict: length mismatch");
  const double ni = norm(g_i);
  const double nj = norm(g_j);
  if (ni == 0.0 || nj == 0.0) return {0.0, false};
  const double c = dot(g_i, g_j) / (ni * nj);
  return {c, c < 0.0};
}

IncidenceSummary incidence(const std::vector<ConflictRecord>& records,
                           std::size_t epochs, std::size_t iterations_per_epoch,
                           std::size_t tasks) {
  if (tasks < 2) throw ConfigError("incidence: need at least two tasks");
  if (epochs == 0 || iterations_per_epoch == 0)
    throw ConfigError("incidence: empty run");
  const std::size_t pairs = tasks * (tasks - 1) / 2;
  const std::size_t total_iters = epochs * iterations_per_epoch;

  // Every unordered pair must appear exactly once per iteration.
  std::vector<std::size_t> seen(total_iters, 0);
  std::vector<std::size_t> conflicts(total_iters, 0);
  if (records.size() != total_iters * pairs)
    throw IntegrityError("incidence: expected " +
                         std::to_string(total_iters * pairs) + " records, got " +
                         std::to_string(records.size()));
  for (const ConflictRecord& rec : records) {
    if (rec.epoch < 1 || rec.epoch > epochs || rec.iteration < 1 ||
        rec.iteration > iterations_per_epoch)
      throw IntegrityError("incidence: record outside the run grid");
    if (rec.task_i >= rec.task_j || rec.task_j >= tasks)
      throw IntegrityError("incidence: bad task pair");
    const std::size_t slot =
        (rec.epoch - 1) * iterations_per_epoch + (rec.iteration - 1);
    seen[slot] += 1;
    conflicts[slot] += rec.conflict ? 1 : 0;
  }
  for (std::size_t s = 0; s < total_iters; ++s) {
    if (seen[s] != pairs)
      throw IntegrityError("incidence: missing pair records in iteration " +
                           std::to_string(s));
  }

  std::size_t total_gc = 0;
  for (std::size_t c : conflicts) total_gc += c;

  const std::size_t half_start = (epochs + 1) / 2;  // epochs > ceil(E/2), 0-based
  std::size_t late_gc = 0;
  for (std::size_t e = half_start; e < epochs; ++e) {
    for (std::size_t i = 0; i < iterations_per_epoch; ++i)
      late_gc += conflicts[e * iterations_per_epoch + i];
  }
  const std::size_t late_epochs = epochs - half_start;

  IncidenceSummary out;
  out.epochs = epochs;
  out.iterations_per_epoch = iterations_per_epoch;
  out.tasks = tasks;
  out.p_all = 100.0 * static_cast<double>(total_gc) /
              static_cast<double>(total_iters * pairs);
  if (late_epochs == 0) {
    out.p_last_half = out.p_all;
  } else {
    out.p_last_half = 100.0 * static_cast<double>(late_gc) /
                      static_cast<double>(late_epochs * iterations_per_epoch * pairs);
  }
  return out;
}

double delta_m(const DeltaMInput& input) {
  if (input.per_task.empty()) throw ConfigError("delta_m: no tasks");
  double task_sum = 0.0;
  for (const auto& metrics : input.per_task) {
    if (metrics.empty()) throw ConfigError("delta_m: task with no metrics");
    double metric_sum = 0.0;
    for (const MetricObservation& m : metrics) {
      if (m.stl == 0.0) throw ConfigError("delta_m: zero STL metric");
      const double sign = m.higher_is_better ? -1.0 : 1.0;
      metric_sum += sign * (m.baseline - m.stl) / m.stl;
    }
    task_sum += metric_sum / static_cast<double>(metrics.size());
  }
  return 100.0 * task_sum / static_cast<double>(input.per_task.size());
}

}  // namespace mtlopt

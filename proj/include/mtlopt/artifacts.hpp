#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mtlopt/train.hpp"

namespace mtlopt {

// Locale-independent, 9 significant digits; used for every CSV value.
std::string csv_double(double v);

// conflicts.csv: epoch,iter,stage,task_i,task_j,cosine,conflict with
// stage in {raw, masked}; the raw and masked observation of each pair are
// written back to back.
void write_conflicts_csv(const std::string& path,
                         const std::vector<ConflictRecord>& raw,
                         const std::vector<ConflictRecord>& masked);

// epochs.csv: epoch,task,loss,p_epoch_raw,p_epoch_masked
void write_epochs_csv(const std::string& path, const std::vector<EpochRow>& rows);

nlohmann::json report_to_json(const RunConfig& config, const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

void write_report_json(const std::string& path, const RunConfig& config,
                       const RunReport& report);
nlohmann::json read_report_json(const std::string& path);

// Writes report.json, conflicts.csv, epochs.csv and mask.txt into dir.
void write_run_artifacts(const std::string& dir, const RunConfig& config,
                         const TrainOutput& output);

}  // namespace mtlopt

#include "mtlopt/artifacts.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include "mtlopt/config.hpp"
#include "mtlopt/errors.hpp"

namespace mtlopt {

std::string csv_double(double v) {
  char buf[40];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot open " + path + " for writing");
  return out;
}

void write_record(std::ofstream& out, const ConflictRecord& rec, const char* stage) {
  out << rec.epoch << ',' << rec.iteration << ',' << stage << ',' << rec.task_i
      << ',' << rec.task_j << ',' << csv_double(rec.cosine) << ','
      << (rec.conflict ? 1 : 0) << '\n';
}

}  // namespace

void write_conflicts_csv(const std::string& path,
                         const std::vector<ConflictRecord>& raw,
                         const std::vector<ConflictRecord>& masked) {
  if (raw.size() != masked.size())
    throw ArtifactError("conflicts.csv: stream size mismatch");
  std::ofstream out = open_for_write(path);
  out << "epoch,iter,stage,task_i,task_j,cosine,conflict\n";
  for (std::size_t i = 0; i < raw.size(); ++i) {
    write_record(out, raw[i], "raw");
    write_record(out, masked[i], "masked");
  }
  if (!out) throw ArtifactError("failed writing " + path);
}

void write_epochs_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream out = open_for_write(path);
  out << "epoch,task,loss,p_epoch_raw,p_epoch_masked\n";
  for (const EpochRow& row : rows) {
    for (std::size_t t = 0; t < row.task_loss.size(); ++t) {
      out << row.epoch << ',' << t << ',' << csv_double(row.task_loss[t]) << ','
          << csv_double(row.p_epoch_raw) << ',' << csv_double(row.p_epoch_masked)
          << '\n';
    }
  }
  if (!out) throw ArtifactError("failed writing " + path);
}

nlohmann::json report_to_json(const RunConfig& config, const RunReport& report) {
  nlohmann::json j;
  j["config"] = serialize_config(config);
  j["tasks"] = report.tasks;
  j["epochs"] = report.epochs;
  j["iterations_per_epoch"] = report.iterations_per_epoch;
  j["mask_total"] = report.mask_total;
  j["mask_selected"] = report.mask_selected;
  j["p_all"] = report.p_all;
  j["p_last_half"] = report.p_last_half;
  j["p_all_raw"] = report.p_all_raw;
  j["p_last_half_raw"] = report.p_last_half_raw;
  j["p_all_masked"] = report.p_all_masked;
  j["p_last_half_masked"] = report.p_last_half_masked;
  j["final_train_loss"] = report.final_train_loss;
  j["last_tenth_train_loss"] = report.last_tenth_train_loss;
  j["eval_loss"] = report.eval_loss;
  j["stl_eval_loss"] = report.stl_eval_loss;
  j["has_delta_m"] = report.has_delta_m;
  if (report.has_delta_m) j["delta_m_pct"] = report.delta_m_pct;
  j["combiner_diagnostics"] = report.combiner_diagnostics;
  j["combiner_fallback_steps"] = report.combiner_fallback_steps;
  j["wall_time_s"] = report.wall_time_s;
  // Echo the choices cmd_report keys on, so reports are self-describing.
  j["method"] = to_string(config.method);
  j["mask_variant"] = to_string(config.mask_variant);
  j["mask_stage"] = to_string(config.mask_stage);
  j["seed"] = config.seed;
  return j;
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.tasks = j.at("tasks").get<std::size_t>();
  r.epochs = j.at("epochs").get<std::size_t>();
  r.iterations_per_epoch = j.at("iterations_per_epoch").get<std::size_t>();
  r.mask_total = j.at("mask_total").get<std::size_t>();
  r.mask_selected = j.at("mask_selected").get<std::size_t>();
  r.p_all = j.at("p_all").get<double>();
  r.p_last_half = j.at("p_last_half").get<double>();
  r.p_all_raw = j.at("p_all_raw").get<double>();
  r.p_last_half_raw = j.at("p_last_half_raw").get<double>();
  r.p_all_masked = j.at("p_all_masked").get<double>();
  r.p_last_half_masked = j.at("p_last_half_masked").get<double>();
  r.final_train_loss = j.at("final_train_loss").get<std::vector<double>>();
  r.last_tenth_train_loss = j.at("last_tenth_train_loss").get<std::vector<double>>();
  r.eval_loss = j.at("eval_loss").get<std::vector<double>>();
  r.stl_eval_loss = j.at("stl_eval_loss").get<std::vector<double>>();
  r.has_delta_m = j.at("has_delta_m").get<bool>();
  if (r.has_delta_m) r.delta_m_pct = j.at("delta_m_pct").get<double>();
  r.combiner_diagnostics =
      j.at("combiner_diagnostics").get<std::map<std::string, double>>();
  r.combiner_fallback_steps = j.at("combiner_fallback_steps").get<double>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

void write_report_json(const std::string& path, const RunConfig& config,
                       const RunReport& report) {
  std::ofstream out = open_for_write(path);
  out << report_to_json(config, report).dump(2) << '\n';
  if (!out) throw ArtifactError("failed writing " + path);
}

nlohmann::json read_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ArtifactError("malformed report.json: " + path);
  return j;
}

void write_run_artifacts(const std::string& dir, const RunConfig& config,
                         const TrainOutput& output) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ArtifactError("cannot create output directory " + dir);
  write_report_json(dir + "/report.json", config, output.report);
  write_conflicts_csv(dir + "/conflicts.csv", output.raw_records,
                      output.masked_records);
  write_epochs_csv(dir + "/epochs.csv", output.epoch_rows);
  save_mask_file(output.mask, dir + "/mask.txt");
}

}  // namespace mtlopt

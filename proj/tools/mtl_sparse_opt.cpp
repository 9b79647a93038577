// mtl-sparse-opt: sparse multi-task training experiments.
//
//   mtl-sparse-opt run <config>
//   mtl-sparse-opt sweep <config> --axis key=v1,v2,... --seeds s1,s2,... [--jobs N]
//   mtl-sparse-opt report <dir>...
//
// The env var MTL_SPARSE_OPT_OUT overrides the output root; configured
// out_dir paths are resolved beneath it.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mtlopt/artifacts.hpp"
#include "mtlopt/config.hpp"
#include "mtlopt/errors.hpp"
#include "mtlopt/train.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitArtifact = 4;

std::string resolve_out_dir(const std::string& configured) {
  const char* root = std::getenv("MTL_SPARSE_OPT_OUT");
  if (root == nullptr || *root == '\0') return configured;
  return std::string(root) + "/" + configured;
}

int cmd_run(const std::string& config_path) {
  mtlopt::RunConfig config = mtlopt::load_config_file(config_path);
  config.validate();
  const std::string out_dir = resolve_out_dir(config.out_dir);
  const mtlopt::TrainOutput output = mtlopt::train(config);
  mtlopt::write_run_artifacts(out_dir, config, output);
  std::cout << "run: " << mtlopt::to_string(config.method) << " / "
            << mtlopt::to_string(config.mask_variant)
            << "  p_all=" << mtlopt::csv_double(output.report.p_all)
            << "  p_last_half=" << mtlopt::csv_double(output.report.p_last_half);
  if (output.report.has_delta_m)
    std::cout << "  delta_m%=" << mtlopt::csv_double(output.report.delta_m_pct);
  std::cout << "  -> " << out_dir << '\n';
  return 0;
}

struct SweepJob {
  std::string axis_key;
  std::string axis_value;
  std::uint64_t seed = 0;
  mtlopt::RunConfig config;
  std::string dir;
};

struct SweepRow {
  std::string axis_key;
  std::string axis_value;
  std::uint64_t seed = 0;
  double p_all = 0.0;
  double p_last_half = 0.0;
  bool has_delta_m = false;
  double delta_m = 0.0;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::string& seeds_arg, int jobs) {
  const std::size_t eq = axis.find('=');
  if (eq == std::string::npos || eq == 0)
    throw mtlopt::ConfigError("--axis must look like key=v1,v2,...");
  const std::string axis_key = axis.substr(0, eq);
  const std::vector<std::string> axis_values = split_list(axis.substr(eq + 1));
  if (axis_values.empty()) throw mtlopt::ConfigError("--axis has no values");

  std::vector<std::uint64_t> seeds;
  for (const std::string& s : split_list(seeds_arg))
    seeds.push_back(std::stoull(s));
  if (seeds.empty()) throw mtlopt::ConfigError("--seeds has no values");
  if (jobs < 1) throw mtlopt::ConfigError("--jobs must be >= 1");

  const mtlopt::RunConfig base = mtlopt::load_config_file(config_path);
  const std::string root = resolve_out_dir(base.out_dir);

  std::vector<SweepJob> queue;
  for (const std::string& value : axis_values) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      SweepJob job;
      job.axis_key = axis_key;
      job.axis_value = value;
      job.seed = seeds[si];
      job.config = base;
      mtlopt::set_config_key(job.config, axis_key, value);
      job.config.seed = seeds[si];
      job.config.validate();
      job.dir = root + "/sweep/" + sanitize(axis_key) + "_" + sanitize(value) +
                "_seed" + std::to_string(seeds[si]) + "_" + std::to_string(si);
      queue.push_back(std::move(job));
    }
  }

  std::vector<SweepRow> rows(queue.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;

  auto worker = [&]() {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) break;
      try {
        const mtlopt::TrainOutput out = mtlopt::train(queue[i].config);
        mtlopt::write_run_artifacts(queue[i].dir, queue[i].config, out);
        rows[i] = {queue[i].axis_key,      queue[i].axis_value,
                   queue[i].seed,          out.report.p_all,
                   out.report.p_last_half, out.report.has_delta_m,
                   out.report.delta_m_pct};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        failure = e.what();
        failed.store(true);
        break;
      }
    }
  };

  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(queue.size()));
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (failed.load()) throw mtlopt::IntegrityError("sweep run failed: " + failure);

  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw mtlopt::ArtifactError("cannot create output directory " + root);
  const std::string csv_path = root + "/sweep.csv";
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw mtlopt::ArtifactError("cannot open " + csv_path + " for writing");
  out << "axis_key,axis_value,seed,kind,p_all,p_last_half,delta_m_pct,"
         "p_all_std,p_last_half_std,delta_m_pct_std\n";
  for (const SweepRow& row : rows) {
    out << row.axis_key << ',' << row.axis_value << ',' << row.seed << ",run,"
        << mtlopt::csv_double(row.p_all) << ','
        << mtlopt::csv_double(row.p_last_half) << ','
        << (row.has_delta_m ? mtlopt::csv_double(row.delta_m) : "") << ",,,\n";
  }

  // One summary row per axis value (mean and std over its seeds).
  for (const std::string& value : axis_values) {
    std::vector<const SweepRow*> group;
    for (const SweepRow& row : rows) {
      if (row.axis_value == value) group.push_back(&row);
    }
    const double n = static_cast<double>(group.size());
    auto mean_std = [&](auto getter) {
      double mean = 0.0;
      for (const SweepRow* r : group) mean += getter(*r);
      mean /= n;
      double var = 0.0;
      for (const SweepRow* r : group) {
        const double d = getter(*r) - mean;
        var += d * d;
      }
      return std::pair<double, double>(mean, std::sqrt(var / n));
    };
    const auto [pa_m, pa_s] = mean_std([](const SweepRow& r) { return r.p_all; });
    const auto [pl_m, pl_s] =
        mean_std([](const SweepRow& r) { return r.p_last_half; });
    const bool has_dm = !group.empty() && group.front()->has_delta_m;
    out << axis_key << ',' << value << ",,summary," << mtlopt::csv_double(pa_m)
        << ',' << mtlopt::csv_double(pl_m) << ',';
    if (has_dm) {
      const auto [dm_m, dm_s] =
          mean_std([](const SweepRow& r) { return r.delta_m; });
      out << mtlopt::csv_double(dm_m) << ',' << mtlopt::csv_double(pa_s) << ','
          << mtlopt::csv_double(pl_s) << ',' << mtlopt::csv_double(dm_s) << '\n';
    } else {
      out << ',' << mtlopt::csv_double(pa_s) << ',' << mtlopt::csv_double(pl_s)
          << ",\n";
    }
  }
  if (!out) throw mtlopt::ArtifactError("failed writing " + csv_path);
  std::cout << "sweep: " << rows.size() << " runs -> " << csv_path << '\n';
  return 0;
}

struct ReportEntry {
  std::string dir;
  std::string method;
  std::string mask_variant;
  double p_all = 0.0;
  double p_last_half = 0.0;
  bool has_delta_m = false;
  double delta_m = 0.0;
};

int cmd_report(const std::vector<std::string>& dirs) {
  std::vector<ReportEntry> entries;
  for (const std::string& dir : dirs) {
    const std::string path = dir + "/report.json";
    const nlohmann::json j = mtlopt::read_report_json(path);
    ReportEntry e;
    e.dir = dir;
    try {
      e.method = j.at("method").get<std::string>();
      e.mask_variant = j.at("mask_variant").get<std::string>();
      e.p_all = j.at("p_all").get<double>();
      e.p_last_half = j.at("p_last_half").get<double>();
      e.has_delta_m = j.at("has_delta_m").get<bool>();
      if (e.has_delta_m) e.delta_m = j.at("delta_m_pct").get<double>();
    } catch (const nlohmann::json::exception& ex) {
      throw mtlopt::ArtifactError("malformed report.json: " + path + " (" +
                                  ex.what() + ")");
    }
    entries.push_back(std::move(e));
  }

  // Pair each method's dense baseline with its sparse-trained runs; the ST
  // improvement is printed in parentheses next to the sparse run's value.
  std::ostringstream table;
  std::ostringstream csv;
  csv << "method,variant,p_all,p_last_half,delta_m_pct,p_all_improvement,"
         "p_last_half_improvement\n";
  table << "method        variant   p_all        p_last_half    delta_m%\n";

  std::vector<std::string> methods;
  for (const ReportEntry& e : entries) {
    bool known = false;
    for (const std::string& m : methods) known = known || m == e.method;
    if (!known) methods.push_back(e.method);
  }

  auto emit = [&](const ReportEntry& e, const ReportEntry* baseline) {
    table << e.method;
    for (std::size_t i = e.method.size(); i < 14; ++i) table << ' ';
    table << e.mask_variant;
    for (std::size_t i = e.mask_variant.size(); i < 10; ++i) table << ' ';
    table << mtlopt::csv_double(e.p_all);
    if (baseline)
      table << " (" << mtlopt::csv_double(baseline->p_all - e.p_all) << ")";
    table << "  " << mtlopt::csv_double(e.p_last_half);
    if (baseline)
      table << " (" << mtlopt::csv_double(baseline->p_last_half - e.p_last_half)
            << ")";
    if (e.has_delta_m) table << "  " << mtlopt::csv_double(e.delta_m);
    table << '\n';
    csv << e.method << ',' << e.mask_variant << ','
        << mtlopt::csv_double(e.p_all) << ',' << mtlopt::csv_double(e.p_last_half)
        << ',' << (e.has_delta_m ? mtlopt::csv_double(e.delta_m) : "") << ',';
    if (baseline)
      csv << mtlopt::csv_double(baseline->p_all - e.p_all) << ','
          << mtlopt::csv_double(baseline->p_last_half - e.p_last_half);
    else
      csv << ',';
    csv << '\n';
  };

  for (const std::string& method : methods) {
    const ReportEntry* baseline = nullptr;
    for (const ReportEntry& e : entries) {
      if (e.method == method && e.mask_variant == "dense") {
        baseline = &e;
        break;
      }
    }
    for (const ReportEntry& e : entries) {
      if (e.method == method && e.mask_variant == "dense") emit(e, nullptr);
    }
    for (const ReportEntry& e : entries) {
      if (e.method == method && e.mask_variant != "dense") emit(e, baseline);
    }
  }

  std::cout << table.str();
  std::ofstream out("comparison.csv", std::ios::binary);
  if (!out) throw mtlopt::ArtifactError("cannot open comparison.csv for writing");
  out << csv.str();
  if (!out) throw mtlopt::ArtifactError("failed writing comparison.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse training experiments for multi-task learning"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run = app.add_subcommand("run", "Execute one training run");
  run->add_option("config", run_config, "config file (key=value lines)")->required();

  std::string sweep_config, sweep_axis, sweep_seeds;
  int sweep_jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "Run a config axis over seeds");
  sweep->add_option("config", sweep_config, "base config file")->required();
  sweep->add_option("--axis", sweep_axis, "key=v1,v2,... override axis")->required();
  sweep->add_option("--seeds", sweep_seeds, "comma list of seeds")->required();
  sweep->add_option("--jobs", sweep_jobs, "worker threads");

  std::vector<std::string> report_dirs;
  CLI::App* report = app.add_subcommand("report", "Compare finished runs");
  report->add_option("dirs", report_dirs, "run output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run_config);
    if (sweep->parsed())
      return cmd_sweep(sweep_config, sweep_axis, sweep_seeds, sweep_jobs);
    if (report->parsed()) return cmd_report(report_dirs);
  } catch (const mtlopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mtlopt::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << '\n';
    return kExitArtifact;
  } catch (const mtlopt::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const mtlopt::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

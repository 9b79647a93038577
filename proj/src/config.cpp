#include "mtlopt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mtlopt/errors.hpp"

namespace mtlopt {

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError("invalid integer for key '" + key + "': '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for key '" + key + "': '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean for key '" + key + "': '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ConfigError("empty element in list for key '" + key + "'");
    out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  }
  if (out.empty()) throw ConfigError("empty list for key '" + key + "'");
  return out;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_size_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

void set_config_key(RunConfig& config, const std::string& key,
                    const std::string& value) {
  SyntheticTaskSpec& b = config.benchmark;
  try {
    if (key == "tasks") b.tasks = parse_u64(key, value);
    else if (key == "d_in") b.d_in = parse_u64(key, value);
    else if (key == "trunk_widths") b.trunk_widths = parse_size_list(key, value);
    else if (key == "d_out") b.d_outs = parse_size_list(key, value);
    else if (key == "teacher_seed") b.teacher_seed = parse_u64(key, value);
    else if (key == "noise_std") b.noise_std = parse_double(key, value);
    else if (key == "samples") b.samples = parse_u64(key, value);
    else if (key == "eval_samples") b.eval_samples = parse_u64(key, value);
    else if (key == "rho") b.rho = parse_double(key, value);
    else if (key == "activation") b.activation = activation_from_string(value);
    else if (key == "method") config.method = method_from_string(value);
    else if (key == "mask_variant")
      config.mask_variant = mask_variant_from_string(value);
    else if (key == "mask_k") config.mask_k = parse_u64(key, value);
    else if (key == "mask_fraction") config.mask_fraction = parse_double(key, value);
    else if (key == "mask_stage") config.mask_stage = mask_stage_from_string(value);
    else if (key == "lr") config.lr = parse_double(key, value);
    else if (key == "epochs") config.epochs = parse_u64(key, value);
    else if (key == "batch") config.batch = parse_u64(key, value);
    else if (key == "seed") config.seed = parse_u64(key, value);
    else if (key == "run_stl") config.run_stl = parse_bool(key, value);
    else if (key == "out_dir") config.out_dir = value;
    else if (key == "cagrad_c") config.combiner.cagrad_c = parse_double(key, value);
    else if (key == "cagrad_iters")
      config.combiner.cagrad_iters = static_cast<int>(parse_u64(key, value));
    else if (key == "graddrop_leak")
      config.combiner.graddrop_leak = parse_double(key, value);
    else if (key == "mgda_iters")
      config.combiner.mgda_iters = static_cast<int>(parse_u64(key, value));
    else if (key == "nashmtl_iters")
      config.combiner.nashmtl_iters = static_cast<int>(parse_u64(key, value));
    else if (key == "nashmtl_eps")
      config.combiner.nashmtl_eps = parse_double(key, value);
    else if (key == "nashmtl_damping")
      config.combiner.nashmtl_damping = parse_double(key, value);
    else
      throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("invalid value for key '" + key + "': " + e.what());
  }
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    set_config_key(config, key, value);
  }
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  const SyntheticTaskSpec& b = config.benchmark;
  std::ostringstream out;
  out << "# benchmark\n";
  out << "tasks=" << b.tasks << '\n';
  out << "d_in=" << b.d_in << '\n';
  out << "trunk_widths=" << format_size_list(b.trunk_widths) << '\n';
  out << "d_out=" << format_size_list(b.d_outs) << '\n';
  out << "teacher_seed=" << b.teacher_seed << '\n';
  out << "noise_std=" << format_double(b.noise_std) << '\n';
  out << "samples=" << b.samples << '\n';
  out << "eval_samples=" << b.eval_samples << '\n';
  out << "rho=" << format_double(b.rho) << '\n';
  out << "activation=" << to_string(b.activation) << '\n';
  out << "# training\n";
  out << "method=" << to_string(config.method) << '\n';
  out << "mask_variant=" << to_string(config.mask_variant) << '\n';
  out << "mask_k=" << config.mask_k << '\n';
  out << "mask_fraction=" << format_double(config.mask_fraction) << '\n';
  out << "mask_stage=" << to_string(config.mask_stage) << '\n';
  out << "lr=" << format_double(config.lr) << '\n';
  out << "epochs=" << config.epochs << '\n';
  out << "batch=" << config.batch << '\n';
  out << "seed=" << config.seed << '\n';
  out << "run_stl=" << (config.run_stl ? "on" : "off") << '\n';
  out << "out_dir=" << config.out_dir << '\n';
  out << "# combiner hyperparameters\n";
  out << "cagrad_c=" << format_double(config.combiner.cagrad_c) << '\n';
  out << "cagrad_iters=" << config.combiner.cagrad_iters << '\n';
  out << "graddrop_leak=" << format_double(config.combiner.graddrop_leak) << '\n';
  out << "mgda_iters=" << config.combiner.mgda_iters << '\n';
  out << "nashmtl_iters=" << config.combiner.nashmtl_iters << '\n';
  out << "nashmtl_eps=" << format_double(config.combiner.nashmtl_eps) << '\n';
  out << "nashmtl_damping=" << format_double(config.combiner.nashmtl_damping) << '\n';
  return out.str();
}

}  // namespace mtlopt

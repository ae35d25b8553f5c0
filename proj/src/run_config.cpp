#include "dsrgan/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dsrgan {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "config key '" + key + "' has a malformed integer value '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "config key '" + key + "' has a malformed numeric value '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "config key '" + key + "' has a malformed seed value '" + v + "'");
  }
}

}  // namespace

AblationFlags parse_ablation_list(const std::string& list) {
  AblationFlags flags;
  std::set<std::string> seen;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (!seen.insert(item).second)
      throw ConfigError("ablation", "duplicate ablation flag '" + item + "'");
    if (item == "no_aux")
      flags.no_aux = true;
    else if (item == "no_progressive")
      flags.no_progressive = true;
    else if (item == "no_pra")
      flags.no_pra = true;
    else if (item == "no_shared_disc")
      flags.no_shared_disc = true;
    else if (item == "no_Lns")
      flags.no_lns = true;
    else if (item == "no_Lrec")
      flags.no_lrec = true;
    else
      throw ConfigError("ablation", "unknown ablation flag '" + item + "'");
  }
  if (flags.no_pra) flags.no_progressive = true;  // flag consistency rule
  return flags;
}

TrainConfig parse_run_config(const std::string& text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(t, "config line " + std::to_string(lineno) +
                               " is not of the form key = value: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError(key, "duplicate config key '" + key + "'");

    if (key == "resolution")
      cfg.resolution = static_cast<int>(parse_long(key, value));
    else if (key == "ds_dim")
      cfg.ds_dim = static_cast<int>(parse_long(key, value));
    else if (key == "dr_dim")
      cfg.dr_dim = static_cast<int>(parse_long(key, value));
    else if (key == "lr")
      cfg.lr = parse_double(key, value);
    else if (key == "beta1")
      cfg.beta1 = parse_double(key, value);
    else if (key == "beta2")
      cfg.beta2 = parse_double(key, value);
    else if (key == "batch_size")
      cfg.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "total_steps")
      cfg.total_steps = parse_long(key, value);
    else if (key == "lambda1")
      cfg.lambda1 = parse_double(key, value);
    else if (key == "lambda2")
      cfg.lambda2 = parse_double(key, value);
    else if (key == "mu1")
      cfg.mu1 = parse_double(key, value);
    else if (key == "mu2")
      cfg.mu2 = parse_double(key, value);
    else if (key == "seed")
      cfg.seed = parse_u64(key, value);
    else if (key == "checkpoint_every")
      cfg.checkpoint_every = parse_long(key, value);
    else if (key == "ablation")
      cfg.ablation = parse_ablation_list(value);
    else
      throw ConfigError(key, "unknown config key '" + key + "'");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
  return cfg;
}

TrainConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string canonical_config_text(const TrainConfig& cfg) {
  char buf[128];
  std::string out;
  auto put_long = [&](const char* k, long v) {
    std::snprintf(buf, sizeof buf, "%s = %ld\n", k, v);
    out += buf;
  };
  auto put_double = [&](const char* k, double v) {
    std::snprintf(buf, sizeof buf, "%s = %.17g\n", k, v);
    out += buf;
  };
  put_long("resolution", cfg.resolution);
  put_long("ds_dim", cfg.ds_dim);
  put_long("dr_dim", cfg.dr_dim);
  put_double("lr", cfg.lr);
  put_double("beta1", cfg.beta1);
  put_double("beta2", cfg.beta2);
  put_long("batch_size", cfg.batch_size);
  put_long("total_steps", cfg.total_steps);
  put_double("lambda1", cfg.lambda1);
  put_double("lambda2", cfg.lambda2);
  put_double("mu1", cfg.mu1);
  put_double("mu2", cfg.mu2);
  std::snprintf(buf, sizeof buf, "seed = %llu\n", static_cast<unsigned long long>(cfg.seed));
  out += buf;
  put_long("checkpoint_every", cfg.checkpoint_every);
  out += "ablation = " + cfg.ablation.to_string() + "\n";
  return out;
}

}  // namespace dsrgan

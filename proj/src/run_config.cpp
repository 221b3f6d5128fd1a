#include "boostnet/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "boostnet/errors.hpp"

namespace boostnet {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

struct KvReader {
  std::map<std::string, std::string> values;
  std::string origin;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string take(const std::string& key, const std::string& fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::string v = it->second;
    values.erase(it);
    return v;
  }

  int take_int(const std::string& key, int fallback) {
    std::string v = take(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      int out = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(origin + ": key '" + key + "' needs an integer, got '" + v + "'");
    }
  }

  double take_double(const std::string& key, double fallback) {
    std::string v = take(key, "");
    if (v.empty()) return fallback;
    try {
      std::size_t pos = 0;
      double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(origin + ": key '" + key + "' needs a number, got '" + v + "'");
    }
  }

  bool take_bool(const std::string& key, bool fallback) {
    std::string v = take(key, "");
    if (v.empty()) return fallback;
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError(origin + ": key '" + key + "' needs a boolean, got '" + v + "'");
  }

  std::vector<int> take_int_list(const std::string& key, std::vector<int> fallback) {
    if (!has(key)) return fallback;
    std::string v = take(key, "");
    std::vector<int> out;
    if (v.empty()) return out;  // explicitly empty list
    for (const std::string& item : split_list(v)) {
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError(origin + ": key '" + key + "' needs integers, got '" + item + "'");
      }
    }
    return out;
  }

  std::vector<double> take_double_list(const std::string& key) {
    std::string v = take(key, "");
    std::vector<double> out;
    if (v.empty()) return out;
    for (const std::string& item : split_list(v)) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError(origin + ": key '" + key + "' needs numbers, got '" + item + "'");
      }
    }
    return out;
  }
};

}  // namespace

void RunConfig::validate() const {
  model.validate();
  training.validate();
  if (holdout_fraction <= 0.0 || holdout_fraction > 0.5)
    throw ConfigError("holdout_fraction must be in (0, 0.5]");
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  KvReader reader;
  reader.origin = origin;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!reader.values.emplace(key, value).second)
      throw ConfigError(origin + ": duplicate key '" + key + "'");
  }

  int version = reader.take_int("config_version", -1);
  if (version != 1) throw ConfigError(origin + ": config_version must be present and equal 1");

  RunConfig config;
  ModelConfig& m = config.model;
  m.num_exits = reader.take_int("num_exits", 1);
  m.backbone = backbone_from_string(reader.take("backbone", "mlp"));
  m.input_dim = reader.take_int("input_dim", 2);
  m.image_size = reader.take_int("image_size", 8);
  m.input_channels = reader.take_int("input_channels", 1);
  m.hidden_widths = reader.take_int_list("hidden_widths", {});
  m.num_classes = reader.take_int("num_classes", 2);
  m.gradient_rescaling_enabled = reader.take_bool("gradient_rescaling", true);
  m.stop_gradient_enabled = reader.take_bool("stop_gradient", true);

  std::vector<double> temperatures = reader.take_double_list("temperature");
  std::vector<double> weights = reader.take_double_list("loss_weight");
  auto broadcast = [&](std::vector<double>& v, const char* what) {
    if (v.size() == 1) v.assign(m.num_exits, v[0]);
    if (!v.empty() && static_cast<int>(v.size()) != m.num_exits)
      throw ConfigError(origin + ": " + what + " needs 1 or num_exits values");
  };
  broadcast(temperatures, "temperature");
  broadcast(weights, "loss_weight");
  for (int n = 1; n <= m.num_exits; ++n) {
    ExitSpec spec;
    spec.index = n;
    if (!temperatures.empty()) spec.temperature = temperatures[n - 1];
    if (!weights.empty()) spec.loss_weight = weights[n - 1];
    m.exit_specs.push_back(spec);
  }

  TrainingConfig& t = config.training;
  t.epochs = reader.take_int("epochs", t.epochs);
  t.batch_size = reader.take_int("batch_size", t.batch_size);
  t.learning_rate = reader.take_double("learning_rate", t.learning_rate);
  t.momentum = reader.take_double("momentum", t.momentum);
  t.decay_milestones = reader.take_int_list("decay_milestones", t.decay_milestones);
  t.decay_factor = reader.take_double("decay_factor", t.decay_factor);
  t.weight_decay = reader.take_double("weight_decay", t.weight_decay);
  t.seed = static_cast<std::uint64_t>(reader.take_int("seed", 0));
  t.checkpoint_every = reader.take_int("checkpoint_every", 0);

  DatasetSpec& d = config.dataset;
  d.kind = dataset_kind_from_string(reader.take("dataset", "two-moons"));
  d.train_size = reader.take_int("train_size", d.train_size);
  d.test_size = reader.take_int("test_size", d.test_size);
  d.noise = reader.take_double("noise", d.noise);
  d.num_classes = m.num_classes;
  d.feature_dim = m.input_dim;
  d.data_dir = reader.take("data_dir", "");
  config.holdout_fraction = reader.take_double("holdout_fraction", config.holdout_fraction);

  if (!reader.values.empty())
    throw ConfigError(origin + ": unknown config key '" + reader.values.begin()->first + "'");

  config.validate();
  return config;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config_text(buffer.str(), path);
}

}  // namespace boostnet

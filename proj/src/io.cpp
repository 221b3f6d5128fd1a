#include "boostnet/io.hpp"

#include <fstream>

#include <json.hpp>

#include "boostnet/errors.hpp"

namespace boostnet {

using nlohmann::json;

std::vector<LogitRecord> dump_logits(const ModelState& model, const Dataset& data) {
  BoostedForwardState state = forward_all_exits(model, data.features);
  const int N = static_cast<int>(state.ensemble_logits.size());
  std::vector<LogitRecord> records(data.size());
  for (int s = 0; s < data.size(); ++s) {
    records[s].sample_id = s;
    records[s].label = data.labels[s];
    for (int n = 0; n < N; ++n) {
      auto row = state.ensemble_logits[n].row(s);
      records[s].logits.emplace_back(row.begin(), row.end());
    }
  }
  return records;
}

void write_logit_dump(const std::string& path, const std::vector<LogitRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write logit dump: " + path);
  for (const LogitRecord& rec : records) {
    json line = {{"sample_id", rec.sample_id}, {"label", rec.label}, {"logits", rec.logits}};
    out << line.dump() << "\n";
  }
}

std::vector<LogitRecord> read_logit_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read logit dump: " + path);
  std::vector<LogitRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("malformed logit dump line in " + path + ": " + e.what());
    }
    LogitRecord rec;
    rec.sample_id = j.at("sample_id").get<int>();
    rec.label = j.at("label").get<int>();
    rec.logits = j.at("logits").get<std::vector<std::vector<double>>>();
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ConfigError("empty logit dump: " + path);
  const std::size_t exits = records.front().logits.size();
  for (const LogitRecord& rec : records)
    if (rec.logits.size() != exits) throw ConfigError("inconsistent exit count in " + path);
  return records;
}

BoostedForwardState state_from_records(const std::vector<LogitRecord>& records) {
  const int S = static_cast<int>(records.size());
  const int N = static_cast<int>(records.front().logits.size());
  const int C = static_cast<int>(records.front().logits.front().size());
  BoostedForwardState state;
  state.batch_size = S;
  for (int n = 0; n < N; ++n) {
    Matrix logits(S, C);
    for (int s = 0; s < S; ++s) {
      if (static_cast<int>(records[s].logits[n].size()) != C)
        throw ConfigError("inconsistent class count in logit records");
      for (int c = 0; c < C; ++c) logits(s, c) = records[s].logits[n][c];
    }
    state.ensemble_logits.push_back(logits);
    state.head_logits.push_back(std::move(logits));
  }
  return state;
}

std::vector<int> labels_from_records(const std::vector<LogitRecord>& records) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const LogitRecord& rec : records) labels.push_back(rec.label);
  return labels;
}

HoldoutConfidences confidences_from_records(const std::vector<LogitRecord>& records) {
  return confidences_from_state(state_from_records(records), labels_from_records(records));
}

void write_policy(const std::string& path, const BudgetPolicy& policy, const CostProfile& costs) {
  json j;
  j["tau"] = policy.budget;
  j["p"] = policy.exit_probability;
  j["saturated"] = policy.saturated;
  j["thresholds"] = policy.thresholds;
  j["starved"] = std::vector<int>(policy.starved.begin(), policy.starved.end());
  j["expected_avg_cost"] = policy.expected_avg_cost;
  j["cost_profile"] = {{"costs", costs.costs}, {"cumulative", costs.cumulative}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write policy: " + path);
  out << j.dump(2) << "\n";
}

std::pair<BudgetPolicy, CostProfile> read_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read policy: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed policy " + path + ": " + e.what());
  }
  BudgetPolicy policy;
  policy.budget = j.at("tau").get<double>();
  policy.exit_probability = j.at("p").get<double>();
  policy.saturated = j.value("saturated", false);
  policy.thresholds = j.at("thresholds").get<std::vector<double>>();
  for (int flag : j.value("starved", std::vector<int>{}))
    policy.starved.push_back(flag != 0);
  policy.expected_avg_cost = j.at("expected_avg_cost").get<double>();
  CostProfile costs =
      CostProfile::from_costs(j.at("cost_profile").at("costs").get<std::vector<double>>());
  return {policy, costs};
}

void write_report(const std::string& path, const EvaluationReport& report) {
  json j;
  j["mode"] = report.mode;
  if (report.mode == "anytime") {
    j["per_exit_accuracy"] = report.per_exit_accuracy;
    j["per_exit_cumulative_cost"] = report.per_exit_cumulative_cost;
  } else {
    j["budget"] = report.budget;
    j["accuracy"] = report.accuracy;
    j["realized_avg_cost"] = report.realized_avg_cost;
    j["exit_histogram"] = report.exit_histogram;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

void write_gallery(const std::string& path, const std::map<int, std::vector<int>>& gallery) {
  json j = json::object();
  for (const auto& [exit, samples] : gallery) j[std::to_string(exit)] = samples;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write gallery: " + path);
  out << j.dump(2) << "\n";
}

void write_curve(const std::string& path, const std::vector<std::pair<double, double>>& points) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write curve: " + path);
  out << "budget,accuracy\n";
  for (const auto& [budget, accuracy] : points) {
    json b = budget, a = accuracy;  // shortest round-trip formatting
    out << b.dump() << "," << a.dump() << "\n";
  }
}

std::string metrics_line(const StepMetrics& metrics) {
  json j;
  j["step"] = metrics.step;
  j["epoch"] = metrics.epoch;
  j["lr"] = metrics.lr;
  j["per_exit_loss"] = metrics.loss.per_exit_loss;
  j["valid_fraction"] = metrics.valid.per_exit_valid_fraction;
  j["total"] = metrics.loss.total;
  return j.dump();
}

}  // namespace boostnet

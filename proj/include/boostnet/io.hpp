#pragma once

#include <map>
#include <string>
#include <vector>

#include "boostnet/calibrator.hpp"
#include "boostnet/dataset.hpp"
#include "boostnet/evaluator.hpp"
#include "boostnet/model.hpp"
#include "boostnet/trainer.hpp"

namespace boostnet {

// One test/holdout sample with its per-exit ensemble logits.
struct LogitRecord {
  int sample_id = 0;
  int label = 0;
  std::vector<std::vector<double>> logits;  // [exit][class]
};

std::vector<LogitRecord> dump_logits(const ModelState& model, const Dataset& data);
void write_logit_dump(const std::string& path, const std::vector<LogitRecord>& records);
std::vector<LogitRecord> read_logit_dump(const std::string& path);

BoostedForwardState state_from_records(const std::vector<LogitRecord>& records);
std::vector<int> labels_from_records(const std::vector<LogitRecord>& records);
HoldoutConfidences confidences_from_records(const std::vector<LogitRecord>& records);

void write_policy(const std::string& path, const BudgetPolicy& policy, const CostProfile& costs);
// Returns the policy plus the cost profile stored with it.
std::pair<BudgetPolicy, CostProfile> read_policy(const std::string& path);

void write_report(const std::string& path, const EvaluationReport& report);
void write_gallery(const std::string& path, const std::map<int, std::vector<int>>& gallery);
void write_curve(const std::string& path, const std::vector<std::pair<double, double>>& points);

// One JSONL metrics line per training step.
std::string metrics_line(const StepMetrics& metrics);

}  // namespace boostnet

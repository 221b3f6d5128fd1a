#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "boostnet/calibrator.hpp"
#include "boostnet/model.hpp"

namespace boostnet {

struct ExitTrace {
  int sample = 0;
  int exit_index = 1;  // 1-based
  double confidence = 0.0;
  int predicted = 0;
  int label = 0;
  double incurred_cost = 0.0;  // cumulative cost at the exit
};

struct EvaluationReport {
  std::string mode;  // "anytime" | "budgeted-batch"
  // anytime
  std::vector<double> per_exit_accuracy;
  std::vector<double> per_exit_cumulative_cost;
  // budgeted-batch
  double budget = 0.0;
  double accuracy = 0.0;
  double realized_avg_cost = 0.0;
  std::vector<int> exit_histogram;
};

EvaluationReport anytime_eval(const BoostedForwardState& states, const std::vector<int>& labels,
                              const CostProfile& costs);

std::pair<EvaluationReport, std::vector<ExitTrace>> budgeted_batch_eval(
    const BoostedForwardState& states, const std::vector<int>& labels, const BudgetPolicy& policy,
    const CostProfile& costs);

// Static multiply-add count per block; the head's cost is attributed to its
// block. Nonlinearities and softmax are not counted.
CostProfile cost_profile_estimate(const ModelState& model);

std::map<int, std::vector<int>> collect_exit_gallery(const std::vector<ExitTrace>& traces,
                                                     std::optional<int> class_filter = {});

// Per-exit confidences/predictions computed from ensemble logits.
HoldoutConfidences confidences_from_state(const BoostedForwardState& states,
                                          const std::vector<int>& labels);

}  // namespace boostnet

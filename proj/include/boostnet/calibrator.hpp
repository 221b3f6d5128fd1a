#pragma once

#include <vector>

#include "boostnet/matrix.hpp"

namespace boostnet {

struct CostProfile {
  std::vector<double> costs;       // per-block C_n
  std::vector<double> cumulative;  // running sums

  static CostProfile from_costs(std::vector<double> costs);
  int num_exits() const { return static_cast<int>(costs.size()); }
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

// C_avg = sum_n (1-p)^{n-1} C_n. Accepts p in [0, 1]; p=0 is the
// nobody-exits-early limit.
double average_cost(double p, const CostProfile& costs);

struct ExitProbability {
  double p = 1.0;
  bool saturated = false;  // budget covered the full network
};

// Newton iteration from p=0.5 with a bisection fallback; the cost curve is
// strictly decreasing in p so the root is unique.
ExitProbability solve_exit_probability(double budget, const CostProfile& costs);

// Per-exit confidences and predictions on a holdout split.
struct HoldoutConfidences {
  int num_exits = 0;
  std::vector<int> labels;
  Matrix confidences;           // [samples x N]
  std::vector<int> predictions;  // row-major [samples x N]

  int size() const { return static_cast<int>(labels.size()); }
  int prediction(int sample, int exit) const { return predictions[sample * num_exits + exit]; }
};

struct BudgetPolicy {
  double budget = 0.0;
  double exit_probability = 1.0;
  bool saturated = false;
  std::vector<double> thresholds;  // exits 1..N-1; inclusive rule conf >= thr
  std::vector<bool> starved;       // exit had no alive samples during calibration
  double expected_avg_cost = 0.0;
};

struct CalibrationResult {
  std::vector<double> thresholds;
  std::vector<bool> starved;
};

// Sequential order-statistic calibration: at each non-final exit the
// threshold is the smallest observed alive confidence whose inclusive exit
// fraction reaches p; ties exit together.
CalibrationResult calibrate_thresholds(const HoldoutConfidences& holdout, double p);

BudgetPolicy make_policy(double budget, const CostProfile& costs,
                         const HoldoutConfidences& holdout);

// Accuracy of the threshold-exit rule on a holdout set.
double policy_accuracy(const HoldoutConfidences& holdout, const std::vector<double>& thresholds);

// Sweeps budgets in ascending order and keeps the previous thresholds
// whenever the candidate set does not strictly improve holdout accuracy.
std::vector<BudgetPolicy> adjust_thresholds_non_degrading(std::vector<BudgetPolicy> policies,
                                                          const HoldoutConfidences& holdout);

}  // namespace boostnet

#include "boostnet/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "boostnet/errors.hpp"

namespace boostnet {

CostProfile CostProfile::from_costs(std::vector<double> costs) {
  if (costs.empty()) throw ConfigError("cost profile needs at least one block");
  CostProfile profile;
  double running = 0.0;
  for (double c : costs) {
    if (!(c > 0.0)) throw ConfigError("block costs must be positive");
    running += c;
    profile.cumulative.push_back(running);
  }
  profile.costs = std::move(costs);
  return profile;
}

double average_cost(double p, const CostProfile& costs) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("exit probability must be in [0, 1]");
  double q = 1.0 - p;
  double survive = 1.0;  // (1-p)^{n-1}
  double total = 0.0;
  for (double c : costs.costs) {
    total += survive * c;
    survive *= q;
  }
  return total;
}

ExitProbability solve_exit_probability(double budget, const CostProfile& costs) {
  const double first = costs.costs.front();
  const double total = costs.total();
  if (budget < first * (1.0 - 1e-12))
    throw ConfigError("budget below the cost of the first classifier");
  if (budget >= total)
    return {std::numeric_limits<double>::min(), true};
  if (costs.num_exits() == 1) return {1.0, false};

  auto residual = [&](double p) { return average_cost(p, costs) - budget; };
  auto derivative = [&](double p) {
    double q = 1.0 - p;
    double d = 0.0;
    double qpow = 1.0;  // q^{n-2}
    for (int n = 2; n <= costs.num_exits(); ++n) {
      d -= (n - 1) * qpow * costs.costs[n - 1];
      qpow *= q;
    }
    return d;
  };

  const double tol = 1e-10 * budget;
  double lo = 0.0, hi = 1.0;  // residual(lo) >= 0 >= residual(hi)
  double p = 0.5;
  for (int iter = 0; iter < 200; ++iter) {
    double g = residual(p);
    if (std::abs(g) <= tol) return {p, false};
    if (g > 0.0)
      lo = p;
    else
      hi = p;
    double d = derivative(p);
    double next = (d != 0.0) ? p - g / d : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    p = next;
  }
  if (std::abs(residual(p)) <= tol) return {p, false};
  throw NumericError("solve_exit_probability did not converge");
}

CalibrationResult calibrate_thresholds(const HoldoutConfidences& holdout, double p) {
  if (holdout.size() == 0) throw ConfigError("calibrate_thresholds: empty holdout");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("calibrate_thresholds: p must be in (0, 1]");
  const int N = holdout.num_exits;

  CalibrationResult result;
  std::vector<int> alive(holdout.size());
  for (int i = 0; i < holdout.size(); ++i) alive[i] = i;

  for (int exit = 0; exit < N - 1; ++exit) {
    if (alive.empty()) {
      result.thresholds.push_back(1.0);
      result.starved.push_back(true);
      continue;
    }
    std::vector<double> conf;
    conf.reserve(alive.size());
    for (int s : alive) conf.push_back(holdout.confidences(s, exit));
    std::sort(conf.begin(), conf.end(), std::greater<>());
    int k = static_cast<int>(std::ceil(p * conf.size()));
    k = std::clamp(k, 1, static_cast<int>(conf.size()));
    double threshold = conf[k - 1];
    result.thresholds.push_back(threshold);
    result.starved.push_back(false);

    std::vector<int> survivors;
    for (int s : alive)
      if (holdout.confidences(s, exit) < threshold) survivors.push_back(s);
    alive = std::move(survivors);
  }
  return result;
}

BudgetPolicy make_policy(double budget, const CostProfile& costs,
                         const HoldoutConfidences& holdout) {
  if (holdout.num_exits != costs.num_exits())
    throw ConfigError("make_policy: holdout/cost exit count mismatch");
  ExitProbability solved = solve_exit_probability(budget, costs);
  CalibrationResult calibration = calibrate_thresholds(holdout, solved.p);
  BudgetPolicy policy;
  policy.budget = budget;
  policy.exit_probability = solved.p;
  policy.saturated = solved.saturated;
  policy.thresholds = std::move(calibration.thresholds);
  policy.starved = std::move(calibration.starved);
  policy.expected_avg_cost = average_cost(solved.p, costs);
  return policy;
}

double policy_accuracy(const HoldoutConfidences& holdout, const std::vector<double>& thresholds) {
  const int N = holdout.num_exits;
  if (static_cast<int>(thresholds.size()) != N - 1)
    throw ConfigError("policy_accuracy: need N-1 thresholds");
  int correct = 0;
  for (int s = 0; s < holdout.size(); ++s) {
    int exit = N - 1;
    for (int n = 0; n < N - 1; ++n) {
      if (holdout.confidences(s, n) >= thresholds[n]) {
        exit = n;
        break;
      }
    }
    if (holdout.prediction(s, exit) == holdout.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / holdout.size();
}

std::vector<BudgetPolicy> adjust_thresholds_non_degrading(std::vector<BudgetPolicy> policies,
                                                          const HoldoutConfidences& holdout) {
  for (std::size_t i = 1; i < policies.size(); ++i)
    if (policies[i].budget < policies[i - 1].budget)
      throw ConfigError("adjust_thresholds_non_degrading: budgets must ascend");

  double best_accuracy = -1.0;
  std::vector<double> best_thresholds;
  std::vector<bool> best_starved;
  for (BudgetPolicy& policy : policies) {
    double candidate = policy_accuracy(holdout, policy.thresholds);
    if (candidate > best_accuracy) {
      best_accuracy = candidate;
      best_thresholds = policy.thresholds;
      best_starved = policy.starved;
    } else {
      policy.thresholds = best_thresholds;
      policy.starved = best_starved;
    }
  }
  return policies;
}

}  // namespace boostnet

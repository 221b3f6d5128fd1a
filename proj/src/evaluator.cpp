#include "boostnet/evaluator.hpp"

#include "boostnet/errors.hpp"

namespace boostnet {

EvaluationReport anytime_eval(const BoostedForwardState& states, const std::vector<int>& labels,
                              const CostProfile& costs) {
  const int N = static_cast<int>(states.ensemble_logits.size());
  const int S = states.batch_size;
  if (static_cast<int>(labels.size()) != S) throw ConfigError("anytime_eval: label count mismatch");
  if (costs.num_exits() != N) throw ConfigError("anytime_eval: cost profile mismatch");

  EvaluationReport report;
  report.mode = "anytime";
  for (int n = 0; n < N; ++n) {
    int correct = 0;
    for (int s = 0; s < S; ++s)
      if (argmax(states.ensemble_logits[n].row(s)) == labels[s]) ++correct;
    report.per_exit_accuracy.push_back(S > 0 ? static_cast<double>(correct) / S : 0.0);
    report.per_exit_cumulative_cost.push_back(costs.cumulative[n]);
  }
  return report;
}

std::pair<EvaluationReport, std::vector<ExitTrace>> budgeted_batch_eval(
    const BoostedForwardState& states, const std::vector<int>& labels, const BudgetPolicy& policy,
    const CostProfile& costs) {
  const int N = static_cast<int>(states.ensemble_logits.size());
  const int S = states.batch_size;
  if (static_cast<int>(labels.size()) != S)
    throw ConfigError("budgeted_batch_eval: label count mismatch");
  if (static_cast<int>(policy.thresholds.size()) != N - 1)
    throw ConfigError("budgeted_batch_eval: need N-1 thresholds");
  if (costs.num_exits() != N) throw ConfigError("budgeted_batch_eval: cost profile mismatch");

  EvaluationReport report;
  report.mode = "budgeted-batch";
  report.budget = policy.budget;
  report.exit_histogram.assign(N, 0);
  std::vector<ExitTrace> traces;
  traces.reserve(S);

  int correct = 0;
  for (int s = 0; s < S; ++s) {
    int exit = N - 1;
    double conf = 0.0;
    for (int n = 0; n < N; ++n) {
      conf = confidence(states.ensemble_logits[n].row(s));
      if (n == N - 1 || conf >= policy.thresholds[n]) {
        exit = n;
        break;
      }
    }
    ExitTrace trace;
    trace.sample = s;
    trace.exit_index = exit + 1;
    trace.confidence = conf;
    trace.predicted = argmax(states.ensemble_logits[exit].row(s));
    trace.label = labels[s];
    trace.incurred_cost = costs.cumulative[exit];
    traces.push_back(trace);

    report.exit_histogram[exit] += 1;
    if (trace.predicted == labels[s]) ++correct;
  }
  // Histogram-weighted sum so the reported cost matches the histogram bitwise.
  double total_cost = 0.0;
  for (int n = 0; n < N; ++n) total_cost += report.exit_histogram[n] * costs.cumulative[n];
  report.accuracy = S > 0 ? static_cast<double>(correct) / S : 0.0;
  report.realized_avg_cost = S > 0 ? total_cost / S : 0.0;
  return {report, traces};
}

CostProfile cost_profile_estimate(const ModelState& model) {
  std::vector<double> costs;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const Block& blk = model.blocks[i];
    double block_cost;
    if (blk.kind == BackboneKind::MultiExitMlp) {
      block_cost = static_cast<double>(blk.affine.in_dim) * blk.affine.out_dim;
    } else {
      const ConvParams& c = blk.conv;
      block_cost = static_cast<double>(c.height) * c.width * c.out_ch * c.kernel * c.kernel * c.in_ch;
    }
    const AffineParams& head = model.heads[i];
    block_cost += static_cast<double>(head.in_dim) * head.out_dim;
    costs.push_back(block_cost);
  }
  return CostProfile::from_costs(std::move(costs));
}

std::map<int, std::vector<int>> collect_exit_gallery(const std::vector<ExitTrace>& traces,
                                                     std::optional<int> class_filter) {
  if (traces.empty()) throw ConfigError("collect_exit_gallery: no traces");
  std::map<int, std::vector<int>> gallery;
  for (const ExitTrace& trace : traces) {
    if (class_filter && trace.label != *class_filter) continue;
    gallery[trace.exit_index].push_back(trace.sample);
  }
  return gallery;
}

HoldoutConfidences confidences_from_state(const BoostedForwardState& states,
                                          const std::vector<int>& labels) {
  const int N = static_cast<int>(states.ensemble_logits.size());
  const int S = states.batch_size;
  HoldoutConfidences holdout;
  holdout.num_exits = N;
  holdout.labels = labels;
  holdout.confidences = Matrix(S, N);
  holdout.predictions.resize(static_cast<std::size_t>(S) * N);
  for (int s = 0; s < S; ++s) {
    for (int n = 0; n < N; ++n) {
      auto row = states.ensemble_logits[n].row(s);
      holdout.confidences(s, n) = confidence(row);
      holdout.predictions[s * N + n] = argmax(row);
    }
  }
  return holdout;
}

}  // namespace boostnet

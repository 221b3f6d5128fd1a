#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "boostnet/errors.hpp"
#include "boostnet/evaluator.hpp"
#include "boostnet/io.hpp"
#include "test_util.hpp"

using namespace boostnet;
using namespace boostnet::test;

namespace {

// Planted logits: per-exit argmax chosen by hand for 4 samples / 2 classes.
BoostedForwardState planted_state() {
  BoostedForwardState state;
  state.batch_size = 4;
  auto exit_logits = [](std::initializer_list<int> winners) {
    Matrix m(4, 2);
    int r = 0;
    for (int w : winners) {
      m(r, w) = 2.0;
      m(r, 1 - w) = -2.0;
      ++r;
    }
    return m;
  };
  // labels (0,1,0,1); accuracies 2/4, 3/4, 4/4
  state.ensemble_logits.push_back(exit_logits({0, 0, 1, 1}));
  state.ensemble_logits.push_back(exit_logits({0, 1, 1, 1}));
  state.ensemble_logits.push_back(exit_logits({0, 1, 0, 1}));
  state.head_logits = state.ensemble_logits;
  return state;
}

}  // namespace

TEST_CASE("anytime_eval: hand-planted accuracies and perfect classifier") {
  std::vector<int> labels = {0, 1, 0, 1};
  CostProfile costs = CostProfile::from_costs({1.0, 2.0, 3.0});
  EvaluationReport report = anytime_eval(planted_state(), labels, costs);
  CHECK(report.per_exit_accuracy == std::vector<double>{0.5, 0.75, 1.0});
  CHECK(report.per_exit_cumulative_cost == std::vector<double>{1.0, 3.0, 6.0});

  // last exit is already perfect at every position
  BoostedForwardState perfect = planted_state();
  perfect.ensemble_logits[0] = perfect.ensemble_logits[2];
  perfect.ensemble_logits[1] = perfect.ensemble_logits[2];
  EvaluationReport all = anytime_eval(perfect, labels, costs);
  for (double acc : all.per_exit_accuracy) CHECK(acc == 1.0);
}

TEST_CASE("budgeted_batch_eval boundary thresholds") {
  std::vector<int> labels = {0, 1, 0, 1};
  CostProfile costs = CostProfile::from_costs({1.0, 2.0, 3.0});
  BudgetPolicy everyone_first;
  everyone_first.thresholds = {0.0, 0.0};
  auto [first_report, first_traces] = budgeted_batch_eval(planted_state(), labels, everyone_first, costs);
  CHECK(first_report.exit_histogram == std::vector<int>{4, 0, 0});
  CHECK(first_report.realized_avg_cost == doctest::Approx(1.0));

  BudgetPolicy nobody;
  nobody.thresholds = {1.1, 1.1};  // confidences < 1
  auto [last_report, last_traces] = budgeted_batch_eval(planted_state(), labels, nobody, costs);
  CHECK(last_report.exit_histogram == std::vector<int>{0, 0, 4});
  CHECK(last_report.realized_avg_cost == doctest::Approx(6.0));
  CHECK(last_report.accuracy == 1.0);
}

TEST_CASE("budgeted_batch_eval worked 2-exit case") {
  // Exit-1 confidences (0.9, 0.85, 0.7, 0.6), threshold 0.8, costs (1, 2).
  auto logit_for_conf = [](double conf) {
    // two classes: conf = sigmoid(delta) -> delta = log(conf/(1-conf))
    return std::log(conf / (1.0 - conf));
  };
  BoostedForwardState state;
  state.batch_size = 4;
  Matrix exit1(4, 2), exit2(4, 2);
  std::vector<double> confs = {0.9, 0.85, 0.7, 0.6};
  for (int r = 0; r < 4; ++r) exit1(r, 0) = logit_for_conf(confs[r]);
  for (int r = 0; r < 4; ++r) exit2(r, 0) = 1.0;
  state.ensemble_logits = {exit1, exit2};
  state.head_logits = state.ensemble_logits;

  std::vector<int> labels = {0, 0, 0, 0};
  BudgetPolicy policy;
  policy.thresholds = {0.8};
  CostProfile costs = CostProfile::from_costs({1.0, 2.0});
  auto [report, traces] = budgeted_batch_eval(state, labels, policy, costs);
  CHECK(report.exit_histogram == std::vector<int>{2, 2});
  CHECK(report.realized_avg_cost == doctest::Approx(2.0));

  // exit consistency: each trace exits at the minimal qualifying n
  for (const ExitTrace& trace : traces) {
    int expected = (confidence(exit1.row(trace.sample)) >= 0.8) ? 1 : 2;
    CHECK(trace.exit_index == expected);
    CHECK(trace.incurred_cost == costs.cumulative[trace.exit_index - 1]);
  }
}

TEST_CASE("cost consistency: realized cost equals histogram-weighted cumulative sum") {
  std::mt19937_64 rng(9);
  BoostedForwardState state;
  state.batch_size = 50;
  for (int n = 0; n < 3; ++n) state.ensemble_logits.push_back(random_matrix(50, 4, rng, 2.0));
  state.head_logits = state.ensemble_logits;
  std::vector<int> labels = random_labels(50, 4, rng);
  CostProfile costs = CostProfile::from_costs({2.0, 3.0, 4.0});
  BudgetPolicy policy;
  policy.thresholds = {0.6, 0.7};

  auto [report, traces] = budgeted_batch_eval(state, labels, policy, costs);
  double expected = 0.0;
  for (int n = 0; n < 3; ++n) expected += report.exit_histogram[n] * costs.cumulative[n];
  expected /= 50.0;
  CHECK(report.realized_avg_cost == expected);  // exact
  int total = 0;
  for (int h : report.exit_histogram) total += h;
  CHECK(total == 50);
}

TEST_CASE("cost_profile_estimate: affine shape arithmetic") {
  ModelConfig cfg;
  cfg.num_exits = 2;
  cfg.input_dim = 10;
  cfg.hidden_widths = {5, 3};
  cfg.num_classes = 2;
  for (int n = 1; n <= 2; ++n) cfg.exit_specs.push_back({n, 0.5, 1.0, 0.0});
  ModelState model = build_model(cfg, 0);
  CostProfile costs = cost_profile_estimate(model);
  // blocks 10->5 and 5->3 with heads 5->2 and 3->2
  CHECK(costs.costs == std::vector<double>{60.0, 21.0});
  CHECK(costs.cumulative == std::vector<double>{60.0, 81.0});

  ModelConfig single = cfg;
  single.num_exits = 1;
  single.hidden_widths = {5};
  single.exit_specs = {{1, 0.5, 1.0, 0.0}};
  CostProfile one = cost_profile_estimate(build_model(single, 0));
  CHECK(one.costs.size() == 1);
  CHECK(one.cumulative == one.costs);
}

TEST_CASE("cost_profile_estimate: conv counting") {
  ModelConfig cfg;
  cfg.backbone = BackboneKind::MultiExitCnn;
  cfg.num_exits = 1;
  cfg.image_size = 8;
  cfg.input_channels = 1;
  cfg.hidden_widths = {3};
  cfg.num_classes = 2;
  cfg.exit_specs = {{1, 0.5, 1.0, 0.0}};
  CostProfile costs = cost_profile_estimate(build_model(cfg, 0));
  // conv: 8*8 positions * 3 out channels * 3*3 kernel * 1 in channel
  // head: (3*8*8) -> 2
  CHECK(costs.costs[0] == doctest::Approx(64 * 3 * 9 * 1 + 192 * 2));
}

TEST_CASE("collect_exit_gallery grouping and filtering") {
  std::vector<ExitTrace> traces(4);
  traces[0] = {0, 1, 0.9, 0, 0, 1.0};
  traces[1] = {1, 5, 0.9, 1, 1, 5.0};
  traces[2] = {2, 1, 0.9, 0, 1, 1.0};
  traces[3] = {3, 5, 0.9, 1, 0, 5.0};

  auto gallery = collect_exit_gallery(traces);
  CHECK(gallery.size() == 2);
  CHECK(gallery[1] == std::vector<int>{0, 2});
  CHECK(gallery[5] == std::vector<int>{1, 3});

  auto filtered = collect_exit_gallery(traces, 1);
  CHECK(filtered[1] == std::vector<int>{2});
  CHECK(filtered[5] == std::vector<int>{1});

  auto empty = collect_exit_gallery(traces, 7);
  CHECK(empty.empty());

  CHECK_THROWS_AS(collect_exit_gallery({}), ConfigError);
}

TEST_CASE("anytime eval with t=0 equals per-head independent accuracy") {
  ModelConfig cfg;
  cfg.num_exits = 3;
  cfg.input_dim = 2;
  cfg.hidden_widths = {4, 4, 4};
  cfg.num_classes = 2;
  for (int n = 1; n <= 3; ++n) cfg.exit_specs.push_back({n, 0.0, 1.0, 0.0});
  ModelState model = build_model(cfg, 3);

  std::mt19937_64 rng(12);
  Matrix inputs = random_matrix(20, 2, rng);
  std::vector<int> labels = random_labels(20, 2, rng);
  BoostedForwardState state = forward_all_exits(model, inputs);
  CostProfile costs = cost_profile_estimate(model);
  EvaluationReport report = anytime_eval(state, labels, costs);

  for (int n = 0; n < 3; ++n) {
    int correct = 0;
    for (int s = 0; s < 20; ++s)
      if (argmax(state.head_logits[n].row(s)) == labels[s]) ++correct;
    CHECK(report.per_exit_accuracy[n] == doctest::Approx(correct / 20.0));
  }
}

TEST_CASE("logit dump round trip and confidence bounds") {
  ModelConfig cfg;
  cfg.num_exits = 2;
  cfg.input_dim = 2;
  cfg.hidden_widths = {4, 4};
  cfg.num_classes = 3;
  for (int n = 1; n <= 2; ++n) cfg.exit_specs.push_back({n, 0.5, 1.0, 0.0});
  ModelState model = build_model(cfg, 1);

  Dataset data = gaussian_blobs(30, 3, 2, 0.3, 5);
  auto records = dump_logits(model, data);
  CHECK(records.size() == 30);

  auto path = std::filesystem::temp_directory_path() / "boostnet_dump_test.jsonl";
  write_logit_dump(path.string(), records);
  auto loaded = read_logit_dump(path.string());
  std::filesystem::remove(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].label == records[i].label);
    CHECK(loaded[i].logits == records[i].logits);  // bit-exact round trip
  }

  HoldoutConfidences h = confidences_from_records(loaded);
  for (int s = 0; s < h.size(); ++s)
    for (int n = 0; n < h.num_exits; ++n) {
      CHECK(h.confidences(s, n) >= 1.0 / 3.0 - 1e-12);
      CHECK(h.confidences(s, n) <= 1.0 + 1e-12);
    }
}

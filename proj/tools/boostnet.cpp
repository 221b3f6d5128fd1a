#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "boostnet/calibrator.hpp"
#include "boostnet/dataset.hpp"
#include "boostnet/errors.hpp"
#include "boostnet/evaluator.hpp"
#include "boostnet/io.hpp"
#include "boostnet/model.hpp"
#include "boostnet/run_config.hpp"
#include "boostnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace boostnet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  int seed = -1;  // < 0 keeps the config's seed
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig config = parse_run_config(args.config_path);
  if (args.seed >= 0) config.training.seed = static_cast<std::uint64_t>(args.seed);
  return config;
}

const Dataset& pick_split(const DataSplits& splits, const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "holdout") return splits.holdout;
  if (name == "test") return splits.test;
  throw ConfigError("unknown split: " + name + " (expected train|holdout|test)");
}

ModelState train_from_config(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  DataSplits splits = make_splits(config.dataset, config.holdout_fraction, config.training.seed);
  ModelState model = build_model(config.model, config.training.seed);

  std::ofstream metrics(out_dir + "/metrics.jsonl");
  if (!metrics) throw ConfigError("cannot write metrics log in " + out_dir);
  TrainHooks hooks;
  hooks.on_step = [&metrics](const StepMetrics& m) { metrics << metrics_line(m) << "\n"; };
  if (config.training.checkpoint_every > 0) {
    int every = config.training.checkpoint_every;
    std::string dir = out_dir;
    hooks.on_epoch_end = [every, dir](int epoch, const ModelState& m) {
      if ((epoch + 1) % every == 0)
        save_checkpoint(m, dir + "/checkpoint_epoch_" + std::to_string(epoch + 1) + ".json");
    };
  }
  model = train(std::move(model), splits.train, config.training, hooks);

  CostProfile costs = cost_profile_estimate(model);
  for (int n = 0; n < config.model.num_exits; ++n)
    model.config.exit_specs[n].block_cost = costs.costs[n];
  save_checkpoint(model, out_dir + "/checkpoint.json");
  return model;
}

int cmd_train(const CommonArgs& args) {
  train_from_config(load_config(args), args.out_dir);
  std::cout << "wrote " << args.out_dir << "/checkpoint.json and metrics.jsonl\n";
  return 0;
}

int cmd_dump_logits(const CommonArgs& args, const std::string& checkpoint_path,
                    const std::string& split, const std::string& out_file) {
  RunConfig config = load_config(args);
  ModelState model = load_checkpoint(checkpoint_path);
  DataSplits splits = make_splits(config.dataset, config.holdout_fraction, config.training.seed);
  const Dataset& data = pick_split(splits, split);
  write_logit_dump(out_file, dump_logits(model, data));
  std::cout << "wrote " << out_file << " (" << data.size() << " records)\n";
  return 0;
}

CostProfile resolve_costs(const std::string& checkpoint_path, const std::vector<double>& costs) {
  if (!costs.empty()) return CostProfile::from_costs(costs);
  if (checkpoint_path.empty())
    throw ConfigError("need either --costs or --checkpoint to establish the cost profile");
  return cost_profile_estimate(load_checkpoint(checkpoint_path));
}

int cmd_calibrate(const std::string& dump_path, std::vector<double> budgets,
                  const std::string& checkpoint_path, const std::vector<double>& costs_arg,
                  const std::string& out_dir) {
  if (budgets.empty()) throw ConfigError("calibrate needs at least one budget");
  std::sort(budgets.begin(), budgets.end());
  CostProfile costs = resolve_costs(checkpoint_path, costs_arg);
  HoldoutConfidences holdout = confidences_from_records(read_logit_dump(dump_path));

  std::vector<BudgetPolicy> policies;
  for (double budget : budgets) policies.push_back(make_policy(budget, costs, holdout));
  std::vector<double> raw_accuracy;
  for (const BudgetPolicy& p : policies) raw_accuracy.push_back(policy_accuracy(holdout, p.thresholds));
  policies = adjust_thresholds_non_degrading(std::move(policies), holdout);

  fs::create_directories(out_dir);
  std::ofstream summary(out_dir + "/calibration_summary.csv");
  summary << "tau,p,raw_holdout_accuracy,adjusted_holdout_accuracy,expected_avg_cost\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    std::string path = out_dir + "/policy_" + std::to_string(i + 1) + ".json";
    write_policy(path, policies[i], costs);
    summary << policies[i].budget << "," << policies[i].exit_probability << "," << raw_accuracy[i]
            << "," << policy_accuracy(holdout, policies[i].thresholds) << ","
            << policies[i].expected_avg_cost << "\n";
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& dump_path, bool anytime, const std::vector<std::string>& policy_paths,
             const std::string& checkpoint_path, const std::vector<double>& costs_arg,
             const std::string& out_dir) {
  auto records = read_logit_dump(dump_path);
  BoostedForwardState state = state_from_records(records);
  std::vector<int> labels = labels_from_records(records);
  fs::create_directories(out_dir);

  std::vector<std::pair<double, double>> curve;
  if (anytime) {
    CostProfile costs = resolve_costs(checkpoint_path, costs_arg);
    EvaluationReport report = anytime_eval(state, labels, costs);
    write_report(out_dir + "/report_anytime.json", report);
    for (std::size_t n = 0; n < report.per_exit_accuracy.size(); ++n)
      curve.emplace_back(report.per_exit_cumulative_cost[n], report.per_exit_accuracy[n]);
  } else {
    if (policy_paths.empty()) throw ConfigError("eval needs --anytime or at least one --policy");
    int index = 0;
    for (const std::string& path : policy_paths) {
      auto [policy, costs] = read_policy(path);
      auto [report, traces] = budgeted_batch_eval(state, labels, policy, costs);
      ++index;
      write_report(out_dir + "/report_budget_" + std::to_string(index) + ".json", report);
      write_gallery(out_dir + "/gallery_budget_" + std::to_string(index) + ".json",
                    collect_exit_gallery(traces));
      curve.emplace_back(policy.budget, report.accuracy);
      std::cout << "tau=" << policy.budget << " accuracy=" << report.accuracy
                << " realized_cost=" << report.realized_avg_cost << "\n";
    }
    std::sort(curve.begin(), curve.end());
  }
  write_curve(out_dir + "/curve.csv", curve);
  std::cout << "wrote " << out_dir << "/curve.csv\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, double epsilon, double threshold) {
  RunConfig config;
  if (!args.config_path.empty()) {
    config = load_config(args);
  } else {
    // Default tiny fixture: 3-exit mlp on two-moons.
    config = parse_run_config_text(
        "config_version = 1\nnum_exits = 3\nhidden_widths = 6,6,6\nnum_classes = 2\n"
        "epochs = 1\nbatch_size = 16\ndecay_milestones =\ntrain_size = 64\n",
        "<gradcheck default>");
  }
  DataSplits splits = make_splits(config.dataset, config.holdout_fraction, config.training.seed);
  ModelState model = build_model(config.model, config.training.seed);
  std::size_t count = param_count(model);
  if (count > 5000)
    throw ConfigError("gradcheck model too large (" + std::to_string(count) + " parameters)");

  int batch = std::min(16, splits.train.size());
  Matrix inputs(batch, splits.train.features.cols);
  std::vector<int> labels(batch);
  for (int r = 0; r < batch; ++r) {
    labels[r] = splits.train.labels[r];
    for (int c = 0; c < inputs.cols; ++c) inputs(r, c) = splits.train.features(r, c);
  }
  double err = finite_diff_gradient_check(model, inputs, labels, epsilon);
  bool pass = err < threshold;
  std::cout << (pass ? "PASS" : "FAIL") << " max relative error " << err << " (threshold "
            << threshold << ", eps " << epsilon << ", " << count << " parameters)\n";
  if (!pass) throw NumericError("gradient check failed");
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& preset) {
  RunConfig base = load_config(args);
  struct Variant {
    std::string name;
    RunConfig config;
  };
  std::vector<Variant> variants;
  auto with_temperature = [&](double t) {
    RunConfig c = base;
    for (ExitSpec& spec : c.model.exit_specs) spec.temperature = t;
    return c;
  };
  if (preset == "temperature-sweep") {
    variants = {{"t0.0", with_temperature(0.0)}, {"t0.5", with_temperature(0.5)},
                {"t1.0", with_temperature(1.0)}};
  } else if (preset == "trainable-prev") {
    RunConfig frozen = base, trainable = base;
    frozen.model.stop_gradient_enabled = true;
    trainable.model.stop_gradient_enabled = false;
    variants = {{"stopgrad-on", frozen}, {"stopgrad-off", trainable}};
  } else if (preset == "rescaling-onoff") {
    RunConfig on = base, off = base;
    on.model.gradient_rescaling_enabled = true;
    off.model.gradient_rescaling_enabled = false;
    variants = {{"rescale-on", on}, {"rescale-off", off}};
  } else if (preset == "batch-size") {
    for (int bs : {32, 64, 128}) {
      RunConfig c = base;
      c.training.batch_size = bs;
      variants.push_back({"bs" + std::to_string(bs), c});
    }
  } else {
    throw ConfigError("unknown preset: " + preset +
                      " (expected temperature-sweep|trainable-prev|rescaling-onoff|batch-size)");
  }

  fs::create_directories(args.out_dir);
  std::ofstream combined(args.out_dir + "/curves.csv");
  combined << "variant,budget,accuracy\n";
  for (const Variant& variant : variants) {
    std::string dir = args.out_dir + "/" + variant.name;
    ModelState model = train_from_config(variant.config, dir);
    DataSplits splits = make_splits(variant.config.dataset, variant.config.holdout_fraction,
                                    variant.config.training.seed);
    BoostedForwardState state = forward_all_exits(model, splits.test.features);
    CostProfile costs = cost_profile_estimate(model);
    EvaluationReport report = anytime_eval(state, splits.test.labels, costs);
    write_report(dir + "/report_anytime.json", report);
    std::vector<std::pair<double, double>> curve;
    for (std::size_t n = 0; n < report.per_exit_accuracy.size(); ++n) {
      curve.emplace_back(report.per_exit_cumulative_cost[n], report.per_exit_accuracy[n]);
      combined << variant.name << "," << report.per_exit_cumulative_cost[n] << ","
               << report.per_exit_accuracy[n] << "\n";
    }
    write_curve(dir + "/curve.csv", curve);
    std::cout << "variant " << variant.name << ": final-exit accuracy "
              << report.per_exit_accuracy.back() << "\n";
  }
  std::cout << "wrote " << args.out_dir << "/curves.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BoostNet: boosted early-exit networks with budgeted inference"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint_path, split = "test", dump_path, out_file, preset;
  std::vector<std::string> policy_paths;
  std::vector<double> budgets, costs_arg;
  bool anytime = false;
  double epsilon = 1e-5, threshold = 1e-5;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", common.config_path, "run config file")->required();
  train_cmd->add_option("--out", common.out_dir, "output directory");
  train_cmd->add_option("--seed", common.seed, "override the config seed");

  auto* dump_cmd = app.add_subcommand("dump-logits", "write per-sample ensemble logits");
  dump_cmd->add_option("--config", common.config_path, "run config file")->required();
  dump_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  dump_cmd->add_option("--split", split, "train|holdout|test");
  dump_cmd->add_option("--out", out_file, "output dump file")->required();
  dump_cmd->add_option("--seed", common.seed, "override the config seed");

  auto* cal_cmd = app.add_subcommand("calibrate", "solve exit probabilities and fit thresholds");
  cal_cmd->add_option("--dump", dump_path, "holdout logit dump")->required();
  cal_cmd->add_option("--budgets", budgets, "budget list (multiply-add units)")
      ->required()
      ->delimiter(',');
  cal_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint for the cost profile");
  cal_cmd->add_option("--costs", costs_arg, "explicit per-block costs")->delimiter(',');
  cal_cmd->add_option("--out", common.out_dir, "output directory");

  auto* eval_cmd = app.add_subcommand("eval", "anytime or budgeted-batch evaluation");
  eval_cmd->add_option("--dump", dump_path, "test logit dump")->required();
  eval_cmd->add_flag("--anytime", anytime, "evaluate every exit at its fixed cost");
  eval_cmd->add_option("--policy", policy_paths, "policy files (budgeted-batch mode)");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint for the cost profile");
  eval_cmd->add_option("--costs", costs_arg, "explicit per-block costs")->delimiter(',');
  eval_cmd->add_option("--out", common.out_dir, "output directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  grad_cmd->add_option("--config", common.config_path, "run config file (default: tiny fixture)");
  grad_cmd->add_option("--eps", epsilon, "central-difference step");
  grad_cmd->add_option("--threshold", threshold, "max relative error allowed");
  grad_cmd->add_option("--seed", common.seed, "override the config seed");

  auto* ablate_cmd = app.add_subcommand("ablate", "run a preset ablation sweep");
  ablate_cmd->add_option("--preset", preset, "temperature-sweep|trainable-prev|rescaling-onoff|batch-size")
      ->required();
  ablate_cmd->add_option("--config", common.config_path, "base run config")->required();
  ablate_cmd->add_option("--out", common.out_dir, "output directory");
  ablate_cmd->add_option("--seed", common.seed, "override the config seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(common);
    if (dump_cmd->parsed()) return cmd_dump_logits(common, checkpoint_path, split, out_file);
    if (cal_cmd->parsed())
      return cmd_calibrate(dump_path, budgets, checkpoint_path, costs_arg, common.out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(dump_path, anytime, policy_paths, checkpoint_path, costs_arg, common.out_dir);
    if (grad_cmd->parsed()) return cmd_gradcheck(common, epsilon, threshold);
    if (ablate_cmd->parsed()) return cmd_ablate(common, preset);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

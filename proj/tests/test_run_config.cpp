#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "boostnet/errors.hpp"
#include "boostnet/run_config.hpp"

using namespace boostnet;

namespace {

const char* kMinimal =
    "config_version = 1\n"
    "num_exits = 2\n"
    "hidden_widths = 8,8\n"
    "epochs = 5\n"
    "decay_milestones = 3\n"
    "train_size = 64\n";

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  RunConfig config = parse_run_config_text(kMinimal);
  CHECK(config.model.num_exits == 2);
  CHECK(config.model.num_classes == 2);
  CHECK(config.model.exit_specs[0].temperature == 0.5);
  CHECK(config.model.exit_specs[1].loss_weight == 1.0);
  CHECK(config.model.stop_gradient_enabled);
  CHECK(config.model.gradient_rescaling_enabled);
  CHECK(config.training.learning_rate == 0.1);
  CHECK(config.training.momentum == 0.9);
  CHECK(config.training.decay_factor == 0.1);
  CHECK(config.dataset.kind == DatasetKind::TwoMoons);
  CHECK(config.holdout_fraction == 0.2);
}

TEST_CASE("comments, blank lines, and per-exit lists") {
  RunConfig config = parse_run_config_text(
      "# experiment\n"
      "config_version = 1\n"
      "\n"
      "num_exits = 3\n"
      "hidden_widths = 4,4,4\n"
      "temperature = 0.1,0.2,0.3\n"
      "loss_weight = 2.0\n"
      "epochs = 2\n"
      "decay_milestones =\n");
  CHECK(config.model.exit_specs[0].temperature == 0.1);
  CHECK(config.model.exit_specs[2].temperature == 0.3);
  CHECK(config.model.exit_specs[1].loss_weight == 2.0);  // broadcast scalar
  CHECK(config.training.decay_milestones.empty());
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(parse_run_config_text(std::string(kMinimal) + "learning_rte = 0.1\n"),
                  ConfigError);
}

TEST_CASE("config_version is required") {
  CHECK_THROWS_AS(parse_run_config_text("num_exits = 2\nepochs = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("config_version = 2\nepochs = 1\n"), ConfigError);
}

TEST_CASE("milestone at or past epochs is a config error") {
  CHECK_THROWS_AS(parse_run_config_text(
                      "config_version = 1\nnum_exits = 1\nepochs = 5\ndecay_milestones = 5\n"),
                  ConfigError);
}

TEST_CASE("malformed values and duplicates") {
  CHECK_THROWS_AS(parse_run_config_text("config_version = 1\nepochs = five\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("config_version = 1\nepochs = 1\nepochs = 2\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("config_version = 1\nstop_gradient = maybe\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("config_version = 1\nno equals sign here\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("config_version = 1\ntemperature = 0.5,0.5\nnum_exits = 3\n"
                                        "hidden_widths = 4,4,4\nepochs = 1\ndecay_milestones =\n"),
                  ConfigError);
}

TEST_CASE("holdout fraction bounds") {
  CHECK_THROWS_AS(parse_run_config_text(std::string(kMinimal) + "holdout_fraction = 0.9\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text(std::string(kMinimal) + "holdout_fraction = 0\n"),
                  ConfigError);
}

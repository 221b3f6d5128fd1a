#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "boostnet/errors.hpp"
#include "boostnet/model.hpp"
#include "test_util.hpp"

using namespace boostnet;
using namespace boostnet::test;

namespace {

Matrix row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<int>(values.size()));
  int c = 0;
  for (double v : values) m(0, c++) = v;
  return m;
}

ModelConfig tiny_mlp_config(int exits, int classes = 2, double temperature = 0.5) {
  ModelConfig cfg;
  cfg.num_exits = exits;
  cfg.input_dim = 3;
  cfg.hidden_widths.assign(exits, 5);
  cfg.num_classes = classes;
  for (int n = 1; n <= exits; ++n) cfg.exit_specs.push_back({n, temperature, 1.0, 0.0});
  return cfg;
}

}  // namespace

TEST_CASE("boosted_combine worked values") {
  Matrix out = boosted_combine(row({1, 0}), row({0, 1}), 0.5);
  CHECK(out(0, 0) == doctest::Approx(0.5));
  CHECK(out(0, 1) == doctest::Approx(1.0));

  // t=0 ignores the carried ensemble entirely.
  Matrix zero_t = boosted_combine(row({7, -3}), row({2, 3}), 0.0);
  CHECK(zero_t(0, 0) == 2.0);
  CHECK(zero_t(0, 1) == 3.0);

  // F_0 = 0 base case: an empty previous ensemble passes the head through.
  Matrix base = boosted_combine(Matrix{}, row({4, 5}), 0.9);
  CHECK(base(0, 0) == 4.0);
  CHECK(base(0, 1) == 5.0);

  CHECK_THROWS_AS(boosted_combine(row({1, 2, 3}), row({1, 2}), 0.5), ConfigError);
}

TEST_CASE("confidence worked values and bounds") {
  CHECK(confidence(row({0, 0}).row(0)) == doctest::Approx(0.5));
  CHECK(confidence(row({0, 0, 0, 0}).row(0)) == doctest::Approx(0.25));
  double e2 = std::exp(2.0);
  CHECK(confidence(row({2, 0, 0}).row(0)) == doctest::Approx(e2 / (e2 + 2.0)).epsilon(1e-9));

  Matrix bad = row({1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(confidence(bad.row(0)), NumericError);
}

TEST_CASE("confidence properties: bounds, shift invariance, argmax consistency") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int classes = 2 + static_cast<int>(rng() % 7);
    Matrix logits = random_matrix(1, classes, rng, 3.0);
    double c = confidence(logits.row(0));
    CHECK(c >= 1.0 / classes - 1e-12);
    CHECK(c <= 1.0 + 1e-12);

    Matrix shifted = logits;
    double offset = static_cast<double>(trial) - 100.0;
    for (double& v : shifted.data) v += offset;
    CHECK(confidence(shifted.row(0)) == doctest::Approx(c).epsilon(1e-9));

    // argmax of softmax equals argmax of the raw logits
    std::vector<double> probs(classes);
    double mx = *std::max_element(logits.data.begin(), logits.data.end());
    for (int k = 0; k < classes; ++k) probs[k] = std::exp(logits(0, k) - mx);
    CHECK(argmax(logits.row(0)) == argmax(probs));
  }
}

TEST_CASE("build_model: degenerate single exit and determinism") {
  ModelConfig cfg = tiny_mlp_config(1);
  ModelState a = build_model(cfg, 0);
  CHECK(a.blocks.size() == 1);
  CHECK(a.heads.size() == 1);

  ModelState b = build_model(cfg, 0);
  auto ra = param_refs(a);
  auto rb = param_refs(b);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(*ra[i].value == *rb[i].value);

  ModelState c = build_model(cfg, 1);
  auto rc = param_refs(c);
  bool any_diff = false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (*ra[i].value != *rc[i].value) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("build_model: parameter partition covers every parameter exactly once") {
  ModelState model = build_model(tiny_mlp_config(3), 42);
  auto refs = param_refs(model);
  CHECK(refs.size() == param_count(model));

  std::map<const double*, int> owners;
  std::map<int, int> per_block;
  for (const ParamRef& ref : refs) {
    CHECK(owners.emplace(ref.value, ref.block_index).second);  // no duplicates
    per_block[ref.block_index] += 1;
  }
  CHECK(per_block.size() == 3);
  // theta_1 = block1 (3x5+5) + head1 (5x2+2)
  CHECK(per_block[1] == 3 * 5 + 5 + 5 * 2 + 2);
  CHECK(per_block[2] == 5 * 5 + 5 + 5 * 2 + 2);
  CHECK(per_block[3] == 5 * 5 + 5 + 5 * 2 + 2);
}

TEST_CASE("build_model rejects invalid configs") {
  ModelConfig cfg = tiny_mlp_config(2);
  cfg.num_exits = 0;
  cfg.exit_specs.clear();
  CHECK_THROWS_AS(build_model(cfg, 0), ConfigError);

  ModelConfig mismatched = tiny_mlp_config(3);
  mismatched.exit_specs.pop_back();
  CHECK_THROWS_AS(build_model(mismatched, 0), ConfigError);

  ModelConfig duplicate = tiny_mlp_config(2);
  duplicate.exit_specs[1].index = 1;
  CHECK_THROWS_AS(build_model(duplicate, 0), ConfigError);
}

TEST_CASE("forward_all_exits: single-exit and zero-temperature reductions") {
  std::mt19937_64 rng(3);
  ModelState single = build_model(tiny_mlp_config(1), 5);
  Matrix inputs = random_matrix(6, 3, rng);
  BoostedForwardState state = forward_all_exits(single, inputs);
  CHECK(max_abs_diff(state.ensemble_logits[0], state.head_logits[0]) == 0.0);

  ModelState cold = build_model(tiny_mlp_config(3, 2, 0.0), 5);
  BoostedForwardState cold_state = forward_all_exits(cold, inputs);
  for (int n = 0; n < 3; ++n)
    CHECK(max_abs_diff(cold_state.ensemble_logits[n], cold_state.head_logits[n]) == 0.0);
}

TEST_CASE("forward_all_exits: unrolled recurrence at t=0.5") {
  std::mt19937_64 rng(11);
  ModelState model = build_model(tiny_mlp_config(3), 9);
  Matrix inputs = random_matrix(8, 3, rng);
  BoostedForwardState state = forward_all_exits(model, inputs);

  // F_3 = 0.25 f_1 + 0.5 f_2 + f_3
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 2; ++c) {
      double expected = 0.25 * state.head_logits[0](r, c) + 0.5 * state.head_logits[1](r, c) +
                        state.head_logits[2](r, c);
      CHECK(state.ensemble_logits[2](r, c) == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("recurrence exactness across backbones and temperatures") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    ModelConfig cfg;
    cfg.num_exits = 2 + static_cast<int>(rng() % 3);
    cfg.num_classes = 2 + static_cast<int>(rng() % 3);
    bool cnn = trial % 2 == 1;
    if (cnn) {
      cfg.backbone = BackboneKind::MultiExitCnn;
      cfg.image_size = 5;
      cfg.hidden_widths.assign(cfg.num_exits, 2);
    } else {
      cfg.input_dim = 4;
      cfg.hidden_widths.assign(cfg.num_exits, 4);
    }
    for (int n = 1; n <= cfg.num_exits; ++n)
      cfg.exit_specs.push_back({n, 0.25 * static_cast<double>(rng() % 5), 1.0, 0.0});

    ModelState model = build_model(cfg, trial);
    Matrix inputs = random_matrix(4, cfg.block_input_dim(1), rng);
    BoostedForwardState state = forward_all_exits(model, inputs);

    for (int n = 1; n < cfg.num_exits; ++n) {
      double t = cfg.exit_specs[n].temperature;
      double worst = 0.0;
      for (std::size_t i = 0; i < state.ensemble_logits[n].data.size(); ++i) {
        double expected = t * state.ensemble_logits[n - 1].data[i] + state.head_logits[n].data[i];
        worst = std::max(worst, std::abs(state.ensemble_logits[n].data[i] - expected));
      }
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("forward_all_exits rejects shape mismatches") {
  ModelState model = build_model(tiny_mlp_config(2), 0);
  Matrix wrong(4, 7);
  CHECK_THROWS_AS(forward_all_exits(model, wrong), ConfigError);
}

TEST_CASE("grad_rescale_factors") {
  auto last = grad_rescale_factors(4, 4);
  CHECK(last.first == doctest::Approx(1.0));
  CHECK(last.second == doctest::Approx(0.0));

  auto first = grad_rescale_factors(1, 4);
  CHECK(first.first == doctest::Approx(0.25));
  CHECK(first.second == doctest::Approx(0.75));

  auto middle = grad_rescale_factors(2, 3);
  CHECK(middle.first == doctest::Approx(0.5));
  CHECK(middle.second == doctest::Approx(0.5));

  CHECK_THROWS_AS(grad_rescale_factors(0, 3), ConfigError);
  CHECK_THROWS_AS(grad_rescale_factors(4, 3), ConfigError);
}

TEST_CASE("rescaling flag leaves the forward pass bitwise unchanged") {
  std::mt19937_64 rng(2);
  ModelConfig cfg = tiny_mlp_config(3);
  ModelState on = build_model(cfg, 77);
  ModelState off = on;
  off.config.gradient_rescaling_enabled = false;

  Matrix inputs = random_matrix(5, 3, rng);
  BoostedForwardState sa = forward_all_exits(on, inputs);
  BoostedForwardState sb = forward_all_exits(off, inputs);
  for (int n = 0; n < 3; ++n) {
    CHECK(sa.ensemble_logits[n].data == sb.ensemble_logits[n].data);
    CHECK(sa.head_logits[n].data == sb.head_logits[n].data);
  }
}

TEST_CASE("checkpoint round trip preserves config and parameters") {
  ModelConfig cfg = tiny_mlp_config(3);
  cfg.exit_specs[1].temperature = 0.75;
  cfg.exit_specs[2].loss_weight = 2.0;
  cfg.gradient_rescaling_enabled = false;
  ModelState model = build_model(cfg, 123);
  model.config.exit_specs[0].block_cost = 25.0;
  model.config.exit_specs[1].block_cost = 35.0;
  model.config.exit_specs[2].block_cost = 35.0;

  auto path = std::filesystem::temp_directory_path() / "boostnet_ckpt_test.json";
  save_checkpoint(model, path.string());
  ModelState loaded = load_checkpoint(path.string());
  std::filesystem::remove(path);

  CHECK(loaded.config.num_exits == 3);
  CHECK(loaded.config.exit_specs[1].temperature == 0.75);
  CHECK(loaded.config.exit_specs[2].loss_weight == 2.0);
  CHECK(loaded.config.exit_specs[0].block_cost == 25.0);
  CHECK(loaded.config.gradient_rescaling_enabled == false);
  auto ra = param_refs(model);
  auto rb = param_refs(loaded);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(*ra[i].value == *rb[i].value);
}

TEST_CASE("cnn backbone forward shapes") {
  ModelConfig cfg;
  cfg.backbone = BackboneKind::MultiExitCnn;
  cfg.num_exits = 2;
  cfg.image_size = 8;
  cfg.input_channels = 1;
  cfg.hidden_widths = {3, 4};
  cfg.num_classes = 3;
  ModelState model = build_model(cfg, 0);

  std::mt19937_64 rng(4);
  Matrix inputs = random_matrix(2, 64, rng);
  BoostedForwardState state = forward_all_exits(model, inputs);
  CHECK(state.head_logits[0].cols == 3);
  CHECK(state.ensemble_logits[1].rows == 2);
  CHECK(model.blocks[0].out_dim() == 3 * 64);
  CHECK(model.blocks[1].out_dim() == 4 * 64);
}

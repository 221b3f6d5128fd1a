#include "boostnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "boostnet/errors.hpp"

namespace boostnet {

void TrainingConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (decay_factor <= 0.0) throw ConfigError("decay_factor must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  for (std::size_t i = 0; i < decay_milestones.size(); ++i) {
    if (decay_milestones[i] >= epochs)
      throw ConfigError("decay milestones must be < epochs");
    if (i > 0 && decay_milestones[i] <= decay_milestones[i - 1])
      throw ConfigError("decay milestones must be strictly increasing");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

double learning_rate_at(const TrainingConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int milestone : config.decay_milestones)
    if (epoch >= milestone) lr *= config.decay_factor;
  return lr;
}

LossBreakdown joint_loss(const BoostedForwardState& state, const std::vector<int>& labels,
                         const std::vector<ExitSpec>& exit_specs) {
  const int N = static_cast<int>(state.ensemble_logits.size());
  const int B = state.batch_size;
  if (static_cast<int>(exit_specs.size()) != N) throw ConfigError("joint_loss: exit_specs mismatch");
  if (static_cast<int>(labels.size()) != B) throw ConfigError("joint_loss: label count mismatch");

  LossBreakdown breakdown;
  breakdown.per_exit_loss.assign(N, 0.0);
  breakdown.per_sample_losses = Matrix(B, N);
  for (int n = 0; n < N; ++n) {
    const Matrix& logits = state.ensemble_logits[n];
    for (int r = 0; r < B; ++r) {
      if (labels[r] < 0 || labels[r] >= logits.cols)
        throw ConfigError("joint_loss: label out of range");
      double loss = cross_entropy(logits.row(r), labels[r]);
      breakdown.per_sample_losses(r, n) = loss;
      breakdown.per_exit_loss[n] += loss / B;
    }
    breakdown.total += exit_specs[n].loss_weight * breakdown.per_exit_loss[n];
  }
  return breakdown;
}

ValidSampleStats valid_fraction(const Matrix& per_sample_losses) {
  const int B = per_sample_losses.rows;
  const int N = per_sample_losses.cols;
  if (B == 0) throw ConfigError("valid_fraction: empty batch");

  std::vector<double> first_exit(B);
  for (int r = 0; r < B; ++r) first_exit[r] = per_sample_losses(r, 0);
  std::sort(first_exit.begin(), first_exit.end());
  double pos = 0.1 * (B - 1);
  int lo = static_cast<int>(pos);
  int hi = std::min(lo + 1, B - 1);
  double frac = pos - lo;
  ValidSampleStats stats;
  stats.reference_threshold = first_exit[lo] + frac * (first_exit[hi] - first_exit[lo]);

  stats.per_exit_valid_fraction.assign(N, 0.0);
  for (int n = 0; n < N; ++n) {
    int valid = 0;
    for (int r = 0; r < B; ++r)
      if (per_sample_losses(r, n) > stats.reference_threshold) ++valid;
    stats.per_exit_valid_fraction[n] = static_cast<double>(valid) / B;
  }
  return stats;
}

ModelState train(ModelState model, const Dataset& data, const TrainingConfig& config,
                 const TrainHooks& hooks) {
  config.validate();
  model.config.validate();
  if (data.size() == 0) throw ConfigError("train: empty dataset");

  ModelState momentum_buffer = zeros_like(model);
  auto params = param_refs(model);
  auto buffers = param_refs(momentum_buffer);

  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = learning_rate_at(config, epoch);

    for (int start = 0; start < data.size(); start += config.batch_size) {
      int end = std::min(start + config.batch_size, data.size());
      Matrix batch(end - start, data.features.cols);
      std::vector<int> labels(end - start);
      for (int i = start; i < end; ++i) {
        int src = order[i];
        labels[i - start] = data.labels[src];
        for (int c = 0; c < data.features.cols; ++c) batch(i - start, c) = data.features(src, c);
      }

      ForwardCache cache;
      BoostedForwardState state;
      BackwardResult back;
      try {
        state = forward_all_exits(model, batch, &cache);
        back = backward_joint(model, cache, state, labels);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(back.loss.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (per-exit:";
        for (double l : back.loss.per_exit_loss) msg << " " << l;
        msg << ")";
        throw NumericError(msg.str());
      }

      if (hooks.on_step) {
        StepMetrics metrics;
        metrics.step = step;
        metrics.epoch = epoch;
        metrics.lr = lr;
        metrics.valid = valid_fraction(back.loss.per_sample_losses);
        metrics.loss = std::move(back.loss);
        hooks.on_step(metrics);
      }

      auto grads = param_refs(back.grads);
      for (std::size_t i = 0; i < params.size(); ++i) {
        double g = *grads[i].value + config.weight_decay * *params[i].value;
        double buf = config.momentum * *buffers[i].value + g;
        *buffers[i].value = buf;
        *params[i].value -= lr * buf;
      }
      ++step;
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
  }
  return model;
}

namespace {

// Loss of the selected exits as a plain function of the parameters, with the
// ensemble carry optionally frozen at the base-point values. frozen_carry[n]
// holds t_{n+1} * F_n(theta_0); index 0 is unused padding for exit 1.
double masked_objective(const ModelState& model, const Matrix& inputs,
                        const std::vector<int>& labels, const std::vector<double>& mask,
                        const std::vector<Matrix>* frozen_carry) {
  BoostedForwardState state = forward_all_exits(model, inputs);
  const ModelConfig& cfg = model.config;
  const int B = state.batch_size;
  double total = 0.0;
  std::vector<double> logits;
  for (int n = 0; n < cfg.num_exits; ++n) {
    if (mask[n] == 0.0) continue;
    double mean = 0.0;
    for (int r = 0; r < B; ++r) {
      auto row = frozen_carry || cfg.independent_heads ? state.head_logits[n].row(r)
                                                       : state.ensemble_logits[n].row(r);
      logits.assign(row.begin(), row.end());
      if (frozen_carry && !cfg.independent_heads && n > 0) {
        const Matrix& carry = (*frozen_carry)[n];
        if (!carry.data.empty())
          for (int c = 0; c < cfg.num_classes; ++c) logits[c] += carry(r, c);
      }
      mean += cross_entropy(logits, labels[r]) / B;
    }
    total += mask[n] * cfg.exit_specs[n].loss_weight * mean;
  }
  return total;
}

}  // namespace

double finite_diff_gradient_check(const ModelState& model, const Matrix& inputs,
                                  const std::vector<int>& labels, double epsilon) {
  ModelState work = model;
  const ModelConfig& cfg = work.config;
  const int N = cfg.num_exits;
  const bool stop_grad = cfg.stop_gradient_enabled;
  const bool rescaling = cfg.gradient_rescaling_enabled;

  ForwardCache cache;
  BoostedForwardState state = forward_all_exits(work, inputs, &cache);
  BackwardResult analytic = backward_joint(work, cache, state, labels);

  std::vector<Matrix> frozen_carry(N);
  if (stop_grad && !cfg.independent_heads) {
    for (int n = 1; n < N; ++n) {
      double t = cfg.exit_specs[n].temperature;
      if (t == 0.0) continue;
      frozen_carry[n] = state.ensemble_logits[n - 1];
      for (double& v : frozen_carry[n].data) v *= t;
    }
  }
  const std::vector<Matrix>* carry = stop_grad ? &frozen_carry : nullptr;

  auto fd = [&](ParamRef ref, const std::vector<double>& mask) {
    double saved = *ref.value;
    *ref.value = saved + epsilon;
    double plus = masked_objective(work, inputs, labels, mask, carry);
    *ref.value = saved - epsilon;
    double minus = masked_objective(work, inputs, labels, mask, carry);
    *ref.value = saved;
    return (plus - minus) / (2.0 * epsilon);
  };

  auto params = param_refs(work);
  auto grads = param_refs(analytic.grads);
  std::vector<double> all_mask(N, 1.0);

  double max_rel_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double oracle;
    if (rescaling) {
      // Per-loss combination: every loss term reaching theta_n is uniformly
      // scaled by 1/(N-n+1); losses shallower than n never touch theta_n.
      int n = params[i].block_index;
      double sum = 0.0;
      for (int exit = n; exit <= N; ++exit) {
        std::vector<double> mask(N, 0.0);
        mask[exit - 1] = 1.0;
        sum += fd(params[i], mask);
      }
      oracle = sum / (N - n + 1);
    } else {
      oracle = fd(params[i], all_mask);
    }
    double a = *grads[i].value;
    if (!std::isfinite(a) || !std::isfinite(oracle))
      throw NumericError("finite_diff_gradient_check: non-finite gradient");
    double rel = std::abs(a - oracle) / std::max({std::abs(a), std::abs(oracle), 1e-8});
    max_rel_err = std::max(max_rel_err, rel);
  }
  return max_rel_err;
}

}  // namespace boostnet

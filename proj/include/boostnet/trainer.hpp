#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "boostnet/dataset.hpp"
#include "boostnet/model.hpp"

namespace boostnet {

struct TrainingConfig {
  int epochs = 300;
  int batch_size = 256;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::vector<int> decay_milestones = {150, 225};
  double decay_factor = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables

  void validate() const;
};

// Step-decay schedule: base rate times decay_factor per passed milestone.
double learning_rate_at(const TrainingConfig& config, int epoch);

LossBreakdown joint_loss(const BoostedForwardState& state, const std::vector<int>& labels,
                         const std::vector<ExitSpec>& exit_specs);

struct ValidSampleStats {
  double reference_threshold = 0.0;  // 10th percentile of exit-1 losses
  std::vector<double> per_exit_valid_fraction;
};

// Linear-interpolation quantile on exit-1 losses; a sample is valid at exit
// n when its loss is strictly above the threshold.
ValidSampleStats valid_fraction(const Matrix& per_sample_losses);

struct StepMetrics {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
  ValidSampleStats valid;
};

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(int epoch, const ModelState&)> on_epoch_end;
};

ModelState train(ModelState model, const Dataset& data, const TrainingConfig& config,
                 const TrainHooks& hooks = {});

// Central-difference check of the analytic gradient over every parameter.
// Honors the model's stop-gradient flag by freezing the ensemble carry at
// the base parameters, and checks rescaled gradients against the per-loss
// finite-difference combination when rescaling is enabled. Returns the max
// relative error (absolute floor 1e-8).
double finite_diff_gradient_check(const ModelState& model, const Matrix& inputs,
                                  const std::vector<int>& labels, double epsilon = 1e-5);

}  // namespace boostnet

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "boostnet/matrix.hpp"

namespace boostnet {

enum class BackboneKind { MultiExitMlp, MultiExitCnn };

std::string to_string(BackboneKind kind);
BackboneKind backbone_from_string(const std::string& name);

// Static per-exit description: temperature t_n applied to the carried
// ensemble, loss weight w_n, and the multiply-add cost of block n.
struct ExitSpec {
  int index = 1;
  double temperature = 0.5;
  double loss_weight = 1.0;
  double block_cost = 0.0;
};

struct ModelConfig {
  int num_exits = 1;
  BackboneKind backbone = BackboneKind::MultiExitMlp;
  int input_dim = 2;        // mlp input feature count
  int image_size = 8;       // cnn: square input side
  int input_channels = 1;   // cnn
  std::vector<int> hidden_widths;  // per block: mlp width or conv channel count
  int num_classes = 2;
  std::vector<ExitSpec> exit_specs;  // empty = defaults (t=0.5, w=1)
  bool gradient_rescaling_enabled = true;
  bool stop_gradient_enabled = true;
  // Ablation control: heads are trained and evaluated on their own logits,
  // with no ensemble carry at all.
  bool independent_heads = false;

  void validate() const;  // throws ConfigError
  int block_input_dim(int block) const;   // flattened, block in 1..N
  int block_output_dim(int block) const;
};

struct AffineParams {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> w;  // [out][in]
  std::vector<double> b;  // [out]
};

struct ConvParams {
  int in_ch = 0;
  int out_ch = 0;
  int height = 0;
  int width = 0;
  int kernel = 3;                 // odd, same padding
  std::vector<double> w;          // [out_ch][in_ch][k][k]
  std::vector<double> b;          // [out_ch]
};

// One backbone block: affine+tanh (mlp) or conv+tanh (cnn).
struct Block {
  BackboneKind kind = BackboneKind::MultiExitMlp;
  AffineParams affine;
  ConvParams conv;
  int out_dim() const;
};

struct ModelState {
  ModelConfig config;
  std::vector<Block> blocks;        // 1..N stored at index n-1
  std::vector<AffineParams> heads;  // linear classifier per block
};

// Flat view over every parameter. block_index is the 1-based n whose
// theta_n the parameter belongs to (block n plus head n).
struct ParamRef {
  double* value;
  int block_index;
};
std::vector<ParamRef> param_refs(ModelState& model);
std::size_t param_count(const ModelState& model);

ModelState build_model(const ModelConfig& config, std::uint64_t seed);
ModelState zeros_like(const ModelState& model);

struct BoostedForwardState {
  std::vector<Matrix> head_logits;      // f_n
  std::vector<Matrix> ensemble_logits;  // F_n = t_n F_{n-1} + f_n
  int batch_size = 0;
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> block_out;  // post-activation features per block
};

// Value of the combine rule. The stop_grad flag documents the gradient
// semantics realized in backward_joint; the value is flag-independent.
Matrix boosted_combine(const Matrix& prev_ensemble, const Matrix& head, double temperature,
                       bool stop_grad = true);

BoostedForwardState forward_all_exits(const ModelState& model, const Matrix& inputs,
                                      ForwardCache* cache = nullptr);

// Backward-only scalars at block n's junction: (head branch, pass-through
// into block n+1).
std::pair<double, double> grad_rescale_factors(int n, int num_exits);

// Max softmax probability, max-subtraction form.
double confidence(std::span<const double> logits);

int argmax(std::span<const double> values);

// Stable -log softmax(logits)[label].
double cross_entropy(std::span<const double> logits, int label);

struct LossBreakdown {
  std::vector<double> per_exit_loss;  // batch means
  double total = 0.0;                 // sum of w_n * mean_n
  Matrix per_sample_losses;           // [batch x N]
};

struct BackwardOptions {
  std::vector<double> exit_mask;      // extra per-exit multiplier; empty = all ones
  std::optional<bool> rescaling;      // overrides config when set
  std::optional<bool> stop_gradient;  // overrides config when set
};

struct BackwardResult {
  ModelState grads;                        // parameter gradients, model-shaped
  std::vector<Matrix> block_output_grads;  // dL/d(block n output), post-junction
  LossBreakdown loss;
};

BackwardResult backward_joint(const ModelState& model, const ForwardCache& cache,
                              const BoostedForwardState& state, const std::vector<int>& labels,
                              const BackwardOptions& options = {});

void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace boostnet

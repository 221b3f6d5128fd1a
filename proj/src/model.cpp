#include "boostnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "boostnet/errors.hpp"

namespace boostnet {

namespace {

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

double softmax_into(std::span<const double> logits, std::vector<double>& probs) {
  // Returns logsumexp; probs gets the normalized distribution.
  double mx = *std::max_element(logits.begin(), logits.end());
  probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - mx);
    sum += probs[c];
  }
  for (double& p : probs) p /= sum;
  return mx + std::log(sum);
}

}  // namespace

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::MultiExitMlp ? "mlp" : "cnn";
}

BackboneKind backbone_from_string(const std::string& name) {
  if (name == "mlp" || name == "multi-exit-mlp") return BackboneKind::MultiExitMlp;
  if (name == "cnn" || name == "multi-exit-cnn") return BackboneKind::MultiExitCnn;
  throw ConfigError("unknown backbone kind: " + name);
}

void ModelConfig::validate() const {
  if (num_exits < 1) throw ConfigError("num_exits must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!hidden_widths.empty() && static_cast<int>(hidden_widths.size()) != num_exits)
    throw ConfigError("hidden_widths must have one entry per exit");
  for (int w : hidden_widths)
    if (w < 1) throw ConfigError("hidden widths must be positive");
  if (!exit_specs.empty()) {
    if (static_cast<int>(exit_specs.size()) != num_exits)
      throw ConfigError("exit_specs length must equal num_exits");
    std::vector<bool> seen(num_exits, false);
    for (const auto& spec : exit_specs) {
      if (spec.index < 1 || spec.index > num_exits || seen[spec.index - 1])
        throw ConfigError("exit_specs indices must form 1..N with no duplicates");
      seen[spec.index - 1] = true;
      if (spec.temperature < 0.0) throw ConfigError("temperature must be nonnegative");
      if (spec.loss_weight < 0.0) throw ConfigError("loss_weight must be nonnegative");
      if (spec.block_cost < 0.0) throw ConfigError("block_cost must be nonnegative");
    }
  }
  if (backbone == BackboneKind::MultiExitMlp) {
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  } else {
    if (image_size < 3 || input_channels < 1) throw ConfigError("invalid cnn input shape");
  }
}

int ModelConfig::block_input_dim(int block) const {
  if (block == 1) {
    return backbone == BackboneKind::MultiExitMlp ? input_dim
                                                  : image_size * image_size * input_channels;
  }
  return block_output_dim(block - 1);
}

int ModelConfig::block_output_dim(int block) const {
  int width = hidden_widths.empty() ? 16 : hidden_widths[block - 1];
  if (backbone == BackboneKind::MultiExitMlp) return width;
  return image_size * image_size * width;
}

int Block::out_dim() const {
  if (kind == BackboneKind::MultiExitMlp) return affine.out_dim;
  return conv.out_ch * conv.height * conv.width;
}

std::vector<ParamRef> param_refs(ModelState& model) {
  std::vector<ParamRef> refs;
  auto add = [&refs](std::vector<double>& tensor, int block_index) {
    for (double& v : tensor) refs.push_back({&v, block_index});
  };
  for (int n = 1; n <= model.config.num_exits; ++n) {
    Block& blk = model.blocks[n - 1];
    if (blk.kind == BackboneKind::MultiExitMlp) {
      add(blk.affine.w, n);
      add(blk.affine.b, n);
    } else {
      add(blk.conv.w, n);
      add(blk.conv.b, n);
    }
    add(model.heads[n - 1].w, n);
    add(model.heads[n - 1].b, n);
  }
  return refs;
}

std::size_t param_count(const ModelState& model) {
  std::size_t count = 0;
  for (const Block& blk : model.blocks) {
    if (blk.kind == BackboneKind::MultiExitMlp)
      count += blk.affine.w.size() + blk.affine.b.size();
    else
      count += blk.conv.w.size() + blk.conv.b.size();
  }
  for (const AffineParams& head : model.heads) count += head.w.size() + head.b.size();
  return count;
}

ModelState build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState model;
  model.config = config;
  if (model.config.exit_specs.empty()) {
    for (int n = 1; n <= config.num_exits; ++n)
      model.config.exit_specs.push_back({n, 0.5, 1.0, 0.0});
  } else {
    std::sort(model.config.exit_specs.begin(), model.config.exit_specs.end(),
              [](const ExitSpec& a, const ExitSpec& b) { return a.index < b.index; });
  }
  if (model.config.hidden_widths.empty())
    model.config.hidden_widths.assign(config.num_exits, 16);

  std::mt19937_64 rng(seed);
  auto fill = [&rng](std::vector<double>& tensor, int fan_in) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& v : tensor) v = dist(rng);
  };

  const ModelConfig& cfg = model.config;
  for (int n = 1; n <= cfg.num_exits; ++n) {
    Block blk;
    blk.kind = cfg.backbone;
    if (cfg.backbone == BackboneKind::MultiExitMlp) {
      blk.affine.in_dim = cfg.block_input_dim(n);
      blk.affine.out_dim = cfg.hidden_widths[n - 1];
      blk.affine.w.resize(static_cast<std::size_t>(blk.affine.out_dim) * blk.affine.in_dim);
      blk.affine.b.assign(blk.affine.out_dim, 0.0);
      fill(blk.affine.w, blk.affine.in_dim);
    } else {
      blk.conv.in_ch = (n == 1) ? cfg.input_channels : cfg.hidden_widths[n - 2];
      blk.conv.out_ch = cfg.hidden_widths[n - 1];
      blk.conv.height = cfg.image_size;
      blk.conv.width = cfg.image_size;
      blk.conv.kernel = 3;
      blk.conv.w.resize(static_cast<std::size_t>(blk.conv.out_ch) * blk.conv.in_ch *
                        blk.conv.kernel * blk.conv.kernel);
      blk.conv.b.assign(blk.conv.out_ch, 0.0);
      fill(blk.conv.w, blk.conv.in_ch * blk.conv.kernel * blk.conv.kernel);
    }
    model.blocks.push_back(std::move(blk));

    AffineParams head;
    head.in_dim = model.blocks.back().out_dim();
    head.out_dim = cfg.num_classes;
    head.w.resize(static_cast<std::size_t>(head.out_dim) * head.in_dim);
    head.b.assign(head.out_dim, 0.0);
    fill(head.w, head.in_dim);
    model.heads.push_back(std::move(head));
  }
  return model;
}

ModelState zeros_like(const ModelState& model) {
  ModelState z = model;
  for (Block& blk : z.blocks) {
    std::fill(blk.affine.w.begin(), blk.affine.w.end(), 0.0);
    std::fill(blk.affine.b.begin(), blk.affine.b.end(), 0.0);
    std::fill(blk.conv.w.begin(), blk.conv.w.end(), 0.0);
    std::fill(blk.conv.b.begin(), blk.conv.b.end(), 0.0);
  }
  for (AffineParams& head : z.heads) {
    std::fill(head.w.begin(), head.w.end(), 0.0);
    std::fill(head.b.begin(), head.b.end(), 0.0);
  }
  return z;
}

Matrix boosted_combine(const Matrix& prev_ensemble, const Matrix& head, double temperature,
                       bool /*stop_grad*/) {
  if (temperature == 0.0 || prev_ensemble.data.empty()) return head;
  if (!prev_ensemble.same_shape(head)) throw ConfigError("boosted_combine: shape mismatch");
  Matrix out = head;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = temperature * prev_ensemble.data[i] + head.data[i];
  return out;
}

namespace {

Matrix affine_forward(const AffineParams& p, const Matrix& in, bool tanh_act) {
  Matrix out(in.rows, p.out_dim);
  for (int r = 0; r < in.rows; ++r) {
    for (int o = 0; o < p.out_dim; ++o) {
      double acc = p.b[o];
      const double* wrow = p.w.data() + static_cast<std::size_t>(o) * p.in_dim;
      for (int i = 0; i < p.in_dim; ++i) acc += wrow[i] * in(r, i);
      out(r, o) = tanh_act ? std::tanh(acc) : acc;
    }
  }
  return out;
}

// grad_out is d/d(activation output). Returns grad w.r.t. input.
Matrix affine_backward(const AffineParams& p, const Matrix& in, const Matrix& out,
                       const Matrix& grad_out, bool tanh_act, AffineParams& grads) {
  Matrix grad_in(in.rows, p.in_dim);
  for (int r = 0; r < in.rows; ++r) {
    for (int o = 0; o < p.out_dim; ++o) {
      double g = grad_out(r, o);
      if (tanh_act) g *= 1.0 - out(r, o) * out(r, o);
      grads.b[o] += g;
      double* gw = grads.w.data() + static_cast<std::size_t>(o) * p.in_dim;
      const double* wrow = p.w.data() + static_cast<std::size_t>(o) * p.in_dim;
      for (int i = 0; i < p.in_dim; ++i) {
        gw[i] += g * in(r, i);
        grad_in(r, i) += g * wrow[i];
      }
    }
  }
  return grad_in;
}

Matrix conv_forward(const ConvParams& p, const Matrix& in) {
  const int pad = p.kernel / 2;
  Matrix out(in.rows, p.out_ch * p.height * p.width);
  for (int r = 0; r < in.rows; ++r) {
    for (int oc = 0; oc < p.out_ch; ++oc) {
      for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
          double acc = p.b[oc];
          for (int ic = 0; ic < p.in_ch; ++ic) {
            for (int ky = 0; ky < p.kernel; ++ky) {
              int sy = y + ky - pad;
              if (sy < 0 || sy >= p.height) continue;
              for (int kx = 0; kx < p.kernel; ++kx) {
                int sx = x + kx - pad;
                if (sx < 0 || sx >= p.width) continue;
                acc += p.w[((static_cast<std::size_t>(oc) * p.in_ch + ic) * p.kernel + ky) * p.kernel + kx] *
                       in(r, (ic * p.height + sy) * p.width + sx);
              }
            }
          }
          out(r, (oc * p.height + y) * p.width + x) = std::tanh(acc);
        }
      }
    }
  }
  return out;
}

Matrix conv_backward(const ConvParams& p, const Matrix& in, const Matrix& out,
                     const Matrix& grad_out, ConvParams& grads) {
  const int pad = p.kernel / 2;
  Matrix grad_in(in.rows, p.in_ch * p.height * p.width);
  for (int r = 0; r < in.rows; ++r) {
    for (int oc = 0; oc < p.out_ch; ++oc) {
      for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
          int oi = (oc * p.height + y) * p.width + x;
          double g = grad_out(r, oi) * (1.0 - out(r, oi) * out(r, oi));
          grads.b[oc] += g;
          for (int ic = 0; ic < p.in_ch; ++ic) {
            for (int ky = 0; ky < p.kernel; ++ky) {
              int sy = y + ky - pad;
              if (sy < 0 || sy >= p.height) continue;
              for (int kx = 0; kx < p.kernel; ++kx) {
                int sx = x + kx - pad;
                if (sx < 0 || sx >= p.width) continue;
                std::size_t wi =
                    ((static_cast<std::size_t>(oc) * p.in_ch + ic) * p.kernel + ky) * p.kernel + kx;
                int si = (ic * p.height + sy) * p.width + sx;
                grads.w[wi] += g * in(r, si);
                grad_in(r, si) += g * p.w[wi];
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Matrix block_forward(const Block& blk, const Matrix& in) {
  if (blk.kind == BackboneKind::MultiExitMlp) return affine_forward(blk.affine, in, true);
  return conv_forward(blk.conv, in);
}

Matrix block_backward(const Block& blk, const Matrix& in, const Matrix& out,
                      const Matrix& grad_out, Block& grads) {
  if (blk.kind == BackboneKind::MultiExitMlp)
    return affine_backward(blk.affine, in, out, grad_out, true, grads.affine);
  return conv_backward(blk.conv, in, out, grad_out, grads.conv);
}

}  // namespace

BoostedForwardState forward_all_exits(const ModelState& model, const Matrix& inputs,
                                      ForwardCache* cache) {
  const ModelConfig& cfg = model.config;
  if (inputs.cols != cfg.block_input_dim(1))
    throw ConfigError("forward_all_exits: input dimension mismatch");

  BoostedForwardState state;
  state.batch_size = inputs.rows;
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = inputs;
  c.block_out.clear();

  const Matrix* features = &c.input;
  for (int n = 1; n <= cfg.num_exits; ++n) {
    c.block_out.push_back(block_forward(model.blocks[n - 1], *features));
    features = &c.block_out.back();
    Matrix f = affine_forward(model.heads[n - 1], *features, false);
    if (cfg.independent_heads || n == 1) {
      state.ensemble_logits.push_back(f);
    } else {
      state.ensemble_logits.push_back(boosted_combine(
          state.ensemble_logits.back(), f, cfg.exit_specs[n - 1].temperature,
          cfg.stop_gradient_enabled));
    }
    state.head_logits.push_back(std::move(f));
  }
  return state;
}

std::pair<double, double> grad_rescale_factors(int n, int num_exits) {
  if (n < 1 || n > num_exits) throw ConfigError("grad_rescale_factors: exit index out of range");
  double depth = static_cast<double>(num_exits - n + 1);
  return {1.0 / depth, static_cast<double>(num_exits - n) / depth};
}

double confidence(std::span<const double> logits) {
  std::vector<double> probs;
  for (double v : logits)
    if (!std::isfinite(v)) throw NumericError("confidence: non-finite logit");
  softmax_into(logits, probs);
  return *std::max_element(probs.begin(), probs.end());
}

double cross_entropy(std::span<const double> logits, int label) {
  std::vector<double> probs;
  double lse = softmax_into(logits, probs);
  return lse - logits[label];
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

BackwardResult backward_joint(const ModelState& model, const ForwardCache& cache,
                              const BoostedForwardState& state, const std::vector<int>& labels,
                              const BackwardOptions& options) {
  const ModelConfig& cfg = model.config;
  const int N = cfg.num_exits;
  const int B = state.batch_size;
  const int C = cfg.num_classes;
  const bool rescaling = options.rescaling.value_or(cfg.gradient_rescaling_enabled);
  const bool stop_grad = options.stop_gradient.value_or(cfg.stop_gradient_enabled);

  if (static_cast<int>(labels.size()) != B)
    throw ConfigError("backward_joint: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C) throw ConfigError("backward_joint: label out of range");
  std::vector<double> mask(N, 1.0);
  if (!options.exit_mask.empty()) {
    if (static_cast<int>(options.exit_mask.size()) != N)
      throw ConfigError("backward_joint: exit_mask length mismatch");
    mask = options.exit_mask;
  }

  BackwardResult result;
  result.grads = zeros_like(model);
  result.block_output_grads.resize(N);
  result.loss.per_exit_loss.assign(N, 0.0);
  result.loss.per_sample_losses = Matrix(B, N);

  // dL/dF_n from each loss term (batch-mean cross-entropy, weighted).
  std::vector<Matrix> dF(N);
  std::vector<double> probs;
  for (int n = 0; n < N; ++n) {
    check_finite(state.ensemble_logits[n], "ensemble logits");
    dF[n] = Matrix(B, C);
    double weight = mask[n] * cfg.exit_specs[n].loss_weight;
    for (int r = 0; r < B; ++r) {
      double lse = softmax_into(state.ensemble_logits[n].row(r), probs);
      double loss = lse - state.ensemble_logits[n](r, labels[r]);
      result.loss.per_sample_losses(r, n) = loss;
      result.loss.per_exit_loss[n] += loss / B;
      for (int c = 0; c < C; ++c) dF[n](r, c) = weight * probs[c] / B;
      dF[n](r, labels[r]) -= weight / B;
    }
    result.loss.total += weight * result.loss.per_exit_loss[n];
  }

  // Walk exits deepest-first. gF accumulates dL/dF_n including ensemble
  // contributions from deeper exits when stop-grad is off.
  Matrix grad_from_above;  // dL at block n's output arriving through block n+1
  Matrix gF_deeper;        // dL/dF_{n+1} from the previous iteration
  for (int n = N; n >= 1; --n) {
    Matrix gF = std::move(dF[n - 1]);
    if (!stop_grad && !cfg.independent_heads && n < N) {
      double t_next = cfg.exit_specs[n].temperature;  // t_{n+1}
      if (t_next != 0.0)
        for (std::size_t i = 0; i < gF.data.size(); ++i)
          gF.data[i] += t_next * gF_deeper.data[i];
    }

    const double head_scale = rescaling ? grad_rescale_factors(n, N).first : 1.0;

    // Head-branch scale applies to the gradient reaching f_n.
    Matrix df = gF;
    if (head_scale != 1.0)
      for (double& v : df.data) v *= head_scale;
    gF_deeper = std::move(gF);

    const Matrix& head_in = cache.block_out[n - 1];
    Matrix grad_features = affine_backward(model.heads[n - 1], head_in, state.head_logits[n - 1],
                                           df, false, result.grads.heads[n - 1]);
    if (n < N) {
      for (std::size_t i = 0; i < grad_features.data.size(); ++i)
        grad_features.data[i] += grad_from_above.data[i];
    }
    result.block_output_grads[n - 1] = grad_features;

    const Matrix& block_in = (n == 1) ? cache.input : cache.block_out[n - 2];
    Matrix grad_in = block_backward(model.blocks[n - 1], block_in, cache.block_out[n - 1],
                                    grad_features, result.grads.blocks[n - 1]);
    if (n > 1) {
      const double scale = rescaling ? grad_rescale_factors(n - 1, N).second : 1.0;
      if (scale != 1.0)
        for (double& v : grad_in.data) v *= scale;
      grad_from_above = std::move(grad_in);
    }
  }
  return result;
}

void save_checkpoint(const ModelState& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "boostnet-checkpoint";
  j["version"] = 1;
  const ModelConfig& cfg = model.config;
  nlohmann::json jc;
  jc["num_exits"] = cfg.num_exits;
  jc["backbone"] = to_string(cfg.backbone);
  jc["input_dim"] = cfg.input_dim;
  jc["image_size"] = cfg.image_size;
  jc["input_channels"] = cfg.input_channels;
  jc["hidden_widths"] = cfg.hidden_widths;
  jc["num_classes"] = cfg.num_classes;
  jc["gradient_rescaling_enabled"] = cfg.gradient_rescaling_enabled;
  jc["stop_gradient_enabled"] = cfg.stop_gradient_enabled;
  jc["independent_heads"] = cfg.independent_heads;
  nlohmann::json specs = nlohmann::json::array();
  for (const ExitSpec& s : cfg.exit_specs)
    specs.push_back({{"index", s.index},
                     {"temperature", s.temperature},
                     {"loss_weight", s.loss_weight},
                     {"block_cost", s.block_cost}});
  jc["exit_specs"] = specs;
  j["config"] = jc;

  nlohmann::json params;
  for (int n = 1; n <= cfg.num_exits; ++n) {
    const Block& blk = model.blocks[n - 1];
    std::string prefix = "block_" + std::to_string(n) + "/";
    if (blk.kind == BackboneKind::MultiExitMlp) {
      params[prefix + "weights"] = blk.affine.w;
      params[prefix + "bias"] = blk.affine.b;
    } else {
      params[prefix + "weights"] = blk.conv.w;
      params[prefix + "bias"] = blk.conv.b;
    }
    std::string hprefix = "head_" + std::to_string(n) + "/";
    params[hprefix + "weights"] = model.heads[n - 1].w;
    params[hprefix + "bias"] = model.heads[n - 1].b;
  }
  j["params"] = params;

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "boostnet-checkpoint")
    throw ConfigError("not a boostnet checkpoint: " + path);

  ModelConfig cfg;
  const auto& jc = j.at("config");
  cfg.num_exits = jc.at("num_exits").get<int>();
  cfg.backbone = backbone_from_string(jc.at("backbone").get<std::string>());
  cfg.input_dim = jc.at("input_dim").get<int>();
  cfg.image_size = jc.at("image_size").get<int>();
  cfg.input_channels = jc.at("input_channels").get<int>();
  cfg.hidden_widths = jc.at("hidden_widths").get<std::vector<int>>();
  cfg.num_classes = jc.at("num_classes").get<int>();
  cfg.gradient_rescaling_enabled = jc.at("gradient_rescaling_enabled").get<bool>();
  cfg.stop_gradient_enabled = jc.at("stop_gradient_enabled").get<bool>();
  cfg.independent_heads = jc.value("independent_heads", false);
  for (const auto& js : jc.at("exit_specs"))
    cfg.exit_specs.push_back({js.at("index").get<int>(), js.at("temperature").get<double>(),
                              js.at("loss_weight").get<double>(), js.at("block_cost").get<double>()});

  ModelState model = build_model(cfg, 0);
  const auto& params = j.at("params");
  for (int n = 1; n <= cfg.num_exits; ++n) {
    Block& blk = model.blocks[n - 1];
    std::string prefix = "block_" + std::to_string(n) + "/";
    auto& w = (blk.kind == BackboneKind::MultiExitMlp) ? blk.affine.w : blk.conv.w;
    auto& b = (blk.kind == BackboneKind::MultiExitMlp) ? blk.affine.b : blk.conv.b;
    auto loaded_w = params.at(prefix + "weights").get<std::vector<double>>();
    auto loaded_b = params.at(prefix + "bias").get<std::vector<double>>();
    if (loaded_w.size() != w.size() || loaded_b.size() != b.size())
      throw ConfigError("checkpoint parameter shape mismatch at " + prefix);
    w = std::move(loaded_w);
    b = std::move(loaded_b);
    std::string hprefix = "head_" + std::to_string(n) + "/";
    auto hw = params.at(hprefix + "weights").get<std::vector<double>>();
    auto hb = params.at(hprefix + "bias").get<std::vector<double>>();
    if (hw.size() != model.heads[n - 1].w.size() || hb.size() != model.heads[n - 1].b.size())
      throw ConfigError("checkpoint parameter shape mismatch at " + hprefix);
    model.heads[n - 1].w = std::move(hw);
    model.heads[n - 1].b = std::move(hb);
  }
  return model;
}

}  // namespace boostnet

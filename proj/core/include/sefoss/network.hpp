#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sefoss/matrix.hpp"
#include "sefoss/tensor.hpp"

namespace sefoss {

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

// The three trainable maps: backbone f (MLP, relu between layers, linear
// last), classification head g (affine, feature_dim -> num_classes) and
// projection h (affine, feature_dim -> feature_dim). Plain value type; the
// trainer owns one mutable copy plus an EMA shadow copy.
struct ModelParams {
  std::vector<DenseLayer> backbone;
  DenseLayer head;
  DenseLayer projection;

  std::size_t input_dim() const { return backbone.front().weight.rows(); }
  std::size_t feature_dim() const { return backbone.back().weight.cols(); }
  std::size_t num_classes() const { return head.weight.cols(); }
  bool all_finite() const;
};

// He-style fan-in scaled uniform weights (variance 2/fan_in), zero biases.
// hidden_sizes may be empty, collapsing f to a single linear layer.
ModelParams init_params(std::uint64_t seed, std::size_t input_dim,
                        std::span<const std::size_t> hidden_sizes,
                        std::size_t feature_dim, std::size_t num_classes);

// Stable enumeration of all parameters; the order defines the layout of
// gradient vectors, optimizer velocities and checkpoint entries.
void for_each_param(
    ModelParams& params,
    const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(
    const ModelParams& params,
    const std::function<void(const std::string&, const Matrix&)>& fn);
std::size_t num_param_tensors(const ModelParams& params);

// Parameters mounted as tensors on one tape for a training step.
struct ModelTensors {
  std::vector<std::pair<Tensor, Tensor>> backbone;  // (weight, bias)
  Tensor head_weight, head_bias;
  Tensor proj_weight, proj_bias;
  std::vector<Tensor> all;      // enumeration order of for_each_param
  std::vector<Tensor> weights;  // weight matrices only (for weight decay)
};

ModelTensors mount(Tape& tape, const ModelParams& params, bool trainable);

Tensor forward_features(const ModelTensors& model, const Tensor& x);
Tensor forward_logits(const ModelTensors& model, const Tensor& features);
Tensor project(const ModelTensors& model, const Tensor& features);

// Gradient-free forward passes for evaluation and calibration.
Matrix eval_features(const ModelParams& params, const Matrix& x);
Matrix eval_logits(const ModelParams& params, const Matrix& x);

// SGD with Nesterov momentum:
//   v <- m * v + g
//   theta <- theta - lr * (g + m * v)
struct OptimizerState {
  std::vector<Matrix> velocity;  // enumeration order
  double momentum = 0.9;
  std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const ModelParams& params, double momentum);
void sgd_nesterov_step(ModelParams& params, std::span<const Matrix> grads,
                       OptimizerState& state, double lr);

// shadow <- m_ema * shadow + (1 - m_ema) * live, per entry.
void ema_update(ModelParams& shadow, const ModelParams& live, double m_ema);

}  // namespace sefoss

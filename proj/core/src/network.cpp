#include "sefoss/network.hpp"

#include <cmath>
#include <stdexcept>

#include "sefoss/errors.hpp"
#include "sefoss/rng.hpp"

namespace sefoss {

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_param(*this, [&](const std::string&, const Matrix& m) {
    ok = ok && m.all_finite();
  });
  return ok;
}

namespace {

Matrix he_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  // Uniform on [-limit, limit] has variance limit^2/3; limit = sqrt(6/fan_in)
  // gives the He variance 2/fan_in.
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

ModelParams init_params(std::uint64_t seed, std::size_t input_dim,
                        std::span<const std::size_t> hidden_sizes,
                        std::size_t feature_dim, std::size_t num_classes) {
  if (input_dim == 0 || feature_dim == 0 || num_classes == 0) {
    throw ConfigError("init_params: dimensions must be >= 1");
  }
  for (std::size_t h : hidden_sizes) {
    if (h == 0) throw ConfigError("init_params: hidden size must be >= 1");
  }
  Rng rng(Rng::mix(seed, stream::kInit));
  ModelParams params;
  std::size_t in = input_dim;
  for (std::size_t h : hidden_sizes) {
    params.backbone.push_back({he_uniform(rng, in, h), Matrix(1, h)});
    in = h;
  }
  params.backbone.push_back(
      {he_uniform(rng, in, feature_dim), Matrix(1, feature_dim)});
  params.head = {he_uniform(rng, feature_dim, num_classes),
                 Matrix(1, num_classes)};
  params.projection = {he_uniform(rng, feature_dim, feature_dim),
                       Matrix(1, feature_dim)};
  return params;
}

namespace {

template <typename Params, typename Fn>
void for_each_param_impl(Params& params, const Fn& fn) {
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    const std::string base = "backbone." + std::to_string(i);
    fn(base + ".weight", params.backbone[i].weight);
    fn(base + ".bias", params.backbone[i].bias);
  }
  fn("head.weight", params.head.weight);
  fn("head.bias", params.head.bias);
  fn("proj.weight", params.projection.weight);
  fn("proj.bias", params.projection.bias);
}

}  // namespace

void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Matrix&)>& fn) {
  for_each_param_impl(params, fn);
}

void for_each_param(
    const ModelParams& params,
    const std::function<void(const std::string&, const Matrix&)>& fn) {
  for_each_param_impl(params, fn);
}

std::size_t num_param_tensors(const ModelParams& params) {
  return 2 * params.backbone.size() + 4;
}

ModelTensors mount(Tape& tape, const ModelParams& params, bool trainable) {
  ModelTensors model;
  for (const DenseLayer& layer : params.backbone) {
    Tensor w = tape.leaf(layer.weight, trainable);
    Tensor b = tape.leaf(layer.bias, trainable);
    model.backbone.emplace_back(w, b);
    model.all.push_back(w);
    model.all.push_back(b);
    model.weights.push_back(w);
  }
  model.head_weight = tape.leaf(params.head.weight, trainable);
  model.head_bias = tape.leaf(params.head.bias, trainable);
  model.proj_weight = tape.leaf(params.projection.weight, trainable);
  model.proj_bias = tape.leaf(params.projection.bias, trainable);
  model.all.insert(model.all.end(), {model.head_weight, model.head_bias,
                                     model.proj_weight, model.proj_bias});
  model.weights.insert(model.weights.end(),
                       {model.head_weight, model.proj_weight});
  return model;
}

Tensor forward_features(const ModelTensors& model, const Tensor& x) {
  Tensor h = x;
  for (std::size_t i = 0; i < model.backbone.size(); ++i) {
    h = add(matmul(h, model.backbone[i].first), model.backbone[i].second);
    if (i + 1 < model.backbone.size()) h = relu(h);
  }
  return h;
}

Tensor forward_logits(const ModelTensors& model, const Tensor& features) {
  return add(matmul(features, model.head_weight), model.head_bias);
}

Tensor project(const ModelTensors& model, const Tensor& features) {
  return add(matmul(features, model.proj_weight), model.proj_bias);
}

namespace {

Matrix affine_rows(const Matrix& x, const DenseLayer& layer) {
  Matrix out(x.rows(), layer.weight.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = layer.bias(0, c);
  }
  add_matmul_nn(out, x, layer.weight);
  return out;
}

}  // namespace

Matrix eval_features(const ModelParams& params, const Matrix& x) {
  Matrix h = x;
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    h = affine_rows(h, params.backbone[i]);
    if (i + 1 < params.backbone.size()) {
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
    }
  }
  return h;
}

Matrix eval_logits(const ModelParams& params, const Matrix& x) {
  return affine_rows(eval_features(params, x), params.head);
}

OptimizerState make_optimizer_state(const ModelParams& params,
                                    double momentum) {
  OptimizerState state;
  state.momentum = momentum;
  for_each_param(params, [&](const std::string&, const Matrix& m) {
    state.velocity.emplace_back(m.rows(), m.cols());
  });
  return state;
}

void sgd_nesterov_step(ModelParams& params, std::span<const Matrix> grads,
                       OptimizerState& state, double lr) {
  if (lr < 0.0) throw std::invalid_argument("sgd_nesterov_step: lr must be >= 0");
  if (grads.size() != state.velocity.size()) {
    throw std::invalid_argument("sgd_nesterov_step: gradient count mismatch");
  }
  std::size_t i = 0;
  const double m = state.momentum;
  for_each_param(params, [&](const std::string&, Matrix& theta) {
    const Matrix& g = grads[i];
    Matrix& v = state.velocity[i];
    if (!g.same_shape(theta) || !v.same_shape(theta)) {
      throw std::invalid_argument("sgd_nesterov_step: shape mismatch");
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g.values()[j];
      double& vj = v.values()[j];
      vj = m * vj + gj;
      theta.values()[j] -= lr * (gj + m * vj);
    }
    ++i;
  });
  ++state.step;
}

void ema_update(ModelParams& shadow, const ModelParams& live, double m_ema) {
  if (m_ema < 0.0 || m_ema > 1.0) {
    throw std::invalid_argument("ema_update: momentum must be in [0, 1]");
  }
  std::size_t i = 0;
  std::vector<const Matrix*> live_params;
  for_each_param(live, [&](const std::string&, const Matrix& m) {
    live_params.push_back(&m);
  });
  for_each_param(shadow, [&](const std::string&, Matrix& s) {
    blend(s, m_ema, 1.0 - m_ema, *live_params[i]);
    ++i;
  });
}

}  // namespace sefoss

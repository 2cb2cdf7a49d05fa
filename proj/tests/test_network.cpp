#include <array>
#include <cmath>

#include <doctest.h>

#include "sefoss/errors.hpp"
#include "sefoss/gradcheck.hpp"
#include "sefoss/network.hpp"
#include "sefoss/rng.hpp"

using namespace sefoss;

namespace {

constexpr std::array<std::size_t, 2> kHidden = {6, 5};

ModelParams small_params(std::uint64_t seed = 3) {
  return init_params(seed, 4, kHidden, 3, 2);
}

}  // namespace

TEST_CASE("init_params is deterministic and validates dims") {
  const ModelParams a = small_params();
  const ModelParams b = small_params();
  bool equal = true;
  for_each_param(a, [&](const std::string& name, const Matrix& m) {
    ModelParams copy = b;
    for_each_param(copy, [&](const std::string& other, const Matrix& n) {
      if (name == other) equal = equal && (m == n);
    });
  });
  CHECK(equal);
  CHECK_THROWS_AS(
      init_params(1, 0, kHidden, 3, 2), ConfigError);
}

TEST_CASE("init_params with no hidden sizes is a single linear layer") {
  const ModelParams p = init_params(5, 7, {}, 4, 3);
  CHECK(p.backbone.size() == 1);
  CHECK(p.backbone[0].weight.rows() == 7);
  CHECK(p.backbone[0].weight.cols() == 4);
  for (double v : p.backbone[0].bias.values()) CHECK(v == 0.0);
}

TEST_CASE("init weight variance is close to 2/fan_in") {
  const std::size_t fan_in = 100;
  const ModelParams p = init_params(11, fan_in, {}, 100, 2);
  double mean = 0.0, var = 0.0;
  const auto values = p.backbone[0].weight.values();
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double expected = 2.0 / static_cast<double>(fan_in);
  CHECK(var == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("forward_features degenerate cases") {
  SUBCASE("zero weights give zero features") {
    ModelParams p = small_params();
    for_each_param(p, [](const std::string&, Matrix& m) {
      for (double& v : m.values()) v = 0.0;
    });
    Tape tape;
    ModelTensors model = mount(tape, p, false);
    Matrix x(3, 4);
    x(0, 0) = 1.5;
    const Tensor feats = forward_features(model, make_constant(x));
    for (double v : feats.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("identity single layer passes inputs through") {
    ModelParams p = init_params(1, 3, {}, 3, 2);
    p.backbone[0].weight = Matrix::identity(3);
    p.backbone[0].bias = Matrix(1, 3);
    Tape tape;
    ModelTensors model = mount(tape, p, false);
    const Matrix x(2, 3, {1.0, -2.0, 0.5, 3.0, 0.0, -1.0});
    const Tensor feats = forward_features(model, make_constant(x));
    CHECK(feats.value() == x);
  }
  SUBCASE("width mismatch throws") {
    Tape tape;
    ModelTensors model = mount(tape, small_params(), false);
    CHECK_THROWS_AS(forward_features(model, make_constant(Matrix(2, 5))),
                    std::invalid_argument);
  }
}

TEST_CASE("forward_logits with zero features yields the bias row") {
  ModelParams p = small_params();
  Tape tape;
  ModelTensors model = mount(tape, p, false);
  const Tensor logits = forward_logits(model, make_constant(Matrix(4, 3)));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(logits.value()(r, c) == p.head.bias(0, c));
    }
  }
}

TEST_CASE("single-class head yields one logit column") {
  const ModelParams p = init_params(2, 3, {}, 3, 1);
  Tape tape;
  ModelTensors model = mount(tape, p, false);
  const Tensor logits =
      forward_logits(model, forward_features(model, make_constant(Matrix(2, 3))));
  CHECK(logits.cols() == 1);
}

TEST_CASE("project identity and zero weight cases") {
  ModelParams p = small_params();
  p.projection.weight = Matrix::identity(3);
  p.projection.bias = Matrix(1, 3);
  Tape tape;
  ModelTensors model = mount(tape, p, false);
  const Matrix v(2, 3, {1.0, 2.0, 3.0, -1.0, 0.0, 4.0});
  CHECK(project(model, make_constant(v)).value() == v);

  p.projection.weight = Matrix(3, 3);
  p.projection.bias = Matrix(1, 3, {0.5, -0.5, 1.0});
  Tape tape2;
  ModelTensors model2 = mount(tape2, p, false);
  const Matrix out = project(model2, make_constant(v)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out(r, 0) == 0.5);
    CHECK(out(r, 1) == -0.5);
    CHECK(out(r, 2) == 1.0);
  }
}

TEST_CASE("g(f(x)) gradients match finite differences") {
  ModelParams p = small_params(17);
  // Jitter biases off zero to stay clear of relu kinks.
  Rng rng(19);
  for_each_param(p, [&](const std::string&, Matrix& m) {
    for (double& v : m.values()) v += rng.uniform(-0.2, 0.2);
  });
  Matrix x(3, 4);
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);

  std::vector<Matrix> flat;
  for_each_param(p, [&](const std::string&, const Matrix& m) {
    flat.push_back(m);
  });

  const GradCheckReport report = grad_check(
      [&](Tape&, std::span<const Tensor> leaves) {
        ModelTensors model;
        std::size_t i = 0;
        for (std::size_t l = 0; l < p.backbone.size(); ++l) {
          Tensor w = leaves[i++], b = leaves[i++];
          model.backbone.emplace_back(w, b);
        }
        model.head_weight = leaves[i++];
        model.head_bias = leaves[i++];
        model.proj_weight = leaves[i++];
        model.proj_bias = leaves[i++];
        return mean(square(
            forward_logits(model, forward_features(model, make_constant(x)))));
      },
      flat, 1e-5);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("tape forward equals plain eval forward") {
  const ModelParams p = small_params(23);
  Rng rng(29);
  Matrix x(6, 4);
  for (double& v : x.values()) v = rng.uniform(-2.0, 2.0);

  Tape tape;
  ModelTensors model = mount(tape, p, true);
  const Matrix tape_logits =
      forward_logits(model, forward_features(model, make_constant(x))).value();
  const Matrix plain_logits = eval_logits(p, x);
  CHECK(max_abs_diff(tape_logits, plain_logits) == 0.0);
}

TEST_CASE("forward passes never mutate parameters") {
  const ModelParams p = small_params(31);
  const ModelParams before = p;
  Matrix x(5, 4);
  (void)eval_logits(p, x);
  Tape tape;
  ModelTensors model = mount(tape, p, true);
  tape.backward(mean(square(
      forward_logits(model, forward_features(model, make_constant(x))))));
  bool same = true;
  std::vector<const Matrix*> lhs, rhs;
  for_each_param(before,
                 [&](const std::string&, const Matrix& m) { lhs.push_back(&m); });
  for_each_param(p,
                 [&](const std::string&, const Matrix& m) { rhs.push_back(&m); });
  for (std::size_t i = 0; i < lhs.size(); ++i) same = same && (*lhs[i] == *rhs[i]);
  CHECK(same);
}

TEST_CASE("sgd_nesterov_step update rule") {
  SUBCASE("hand-evaluated scalar step") {
    ModelParams p = init_params(1, 2, {}, 1, 1);
    for_each_param(p, [](const std::string&, Matrix& m) {
      for (double& v : m.values()) v = 1.0;
    });
    OptimizerState state = make_optimizer_state(p, 0.9);
    std::vector<Matrix> grads;
    for_each_param(p, [&](const std::string&, const Matrix& m) {
      grads.push_back(Matrix::filled(m.rows(), m.cols(), 1.0));
    });
    sgd_nesterov_step(p, grads, state, 0.1);
    // v = 0.9*0 + 1 = 1; theta = 1 - 0.1*(1 + 0.9*1) = 0.81
    CHECK(p.backbone[0].weight(0, 0) == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(state.velocity[0](0, 0) == doctest::Approx(1.0));
    CHECK(state.step == 1);
  }
  SUBCASE("momentum zero reduces to plain SGD") {
    ModelParams p = init_params(2, 2, {}, 1, 1);
    const double w0 = p.backbone[0].weight(0, 0);
    OptimizerState state = make_optimizer_state(p, 0.0);
    std::vector<Matrix> grads;
    for_each_param(p, [&](const std::string&, const Matrix& m) {
      grads.push_back(Matrix::filled(m.rows(), m.cols(), 2.0));
    });
    sgd_nesterov_step(p, grads, state, 0.05);
    CHECK(p.backbone[0].weight(0, 0) == doctest::Approx(w0 - 0.1).epsilon(1e-15));
  }
  SUBCASE("zero gradient and velocity leave parameters unchanged") {
    ModelParams p = small_params();
    const ModelParams before = p;
    OptimizerState state = make_optimizer_state(p, 0.9);
    std::vector<Matrix> grads;
    for_each_param(p, [&](const std::string&, const Matrix& m) {
      grads.emplace_back(m.rows(), m.cols());
    });
    sgd_nesterov_step(p, grads, state, 0.1);
    CHECK(p.backbone[0].weight == before.backbone[0].weight);
    CHECK(p.head.weight == before.head.weight);
  }
  SUBCASE("shape mismatch throws") {
    ModelParams p = small_params();
    OptimizerState state = make_optimizer_state(p, 0.9);
    std::vector<Matrix> grads(state.velocity.size(), Matrix(1, 1));
    CHECK_THROWS_AS(sgd_nesterov_step(p, grads, state, 0.1),
                    std::invalid_argument);
  }
}

TEST_CASE("ema_update convex combination") {
  ModelParams live = small_params(41);
  ModelParams shadow = small_params(43);

  SUBCASE("momentum 0 copies the live params") {
    ema_update(shadow, live, 0.0);
    CHECK(shadow.head.weight == live.head.weight);
  }
  SUBCASE("momentum 1 leaves the shadow unchanged") {
    const ModelParams before = shadow;
    ema_update(shadow, live, 1.0);
    CHECK(shadow.head.weight == before.head.weight);
  }
  SUBCASE("single step from 0 toward 1 gives 0.001") {
    ModelParams zeros = small_params(1);
    ModelParams ones = small_params(1);
    for_each_param(zeros, [](const std::string&, Matrix& m) {
      for (double& v : m.values()) v = 0.0;
    });
    for_each_param(ones, [](const std::string&, Matrix& m) {
      for (double& v : m.values()) v = 1.0;
    });
    ema_update(zeros, ones, 0.999);
    CHECK(zeros.head.weight(0, 0) == doctest::Approx(0.001).epsilon(1e-12));
  }
  SUBCASE("with constant live params the shadow converges monotonically") {
    double prev = 1e300;
    for (int step = 0; step < 200; ++step) {
      ema_update(shadow, live, 0.9);
      double worst = 0.0;
      std::vector<const Matrix*> a, b;
      for_each_param(shadow, [&](const std::string&, const Matrix& m) {
        a.push_back(&m);
      });
      for_each_param(live, [&](const std::string&, const Matrix& m) {
        b.push_back(&m);
      });
      for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, max_abs_diff(*a[i], *b[i]));
      }
      CHECK(worst <= prev);
      prev = worst;
    }
    CHECK(prev < 1e-8);
  }
}

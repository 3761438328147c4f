#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "dsg/errors.hpp"
#include "dsg/graph.hpp"
#include "dsg/optim.hpp"
#include "dsg/tensor.hpp"

using namespace dsg;

TEST_CASE("clip leaves gradients alone at or below the limit") {
  // Norm is exactly 5 (3-4-5 triangle); the comparison is strict, so no scaling.
  TensorMap grads{{"a", Tensor::row({3.0, 4.0})}};
  const double norm = clip_grad_norm(grads, 5.0);
  CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(grads["a"].data == std::vector<double>{3.0, 4.0});
}

TEST_CASE("clip rescales the global norm across tensors") {
  TensorMap grads{{"a", Tensor::row({3.0, 4.0})}, {"b", Tensor::row({12.0})}};
  const double norm = clip_grad_norm(grads, 6.5);  // global norm = 13
  CHECK(norm == doctest::Approx(13.0).epsilon(1e-12));
  CHECK(grads["a"].data[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(grads["a"].data[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(grads["b"].data[0] == doctest::Approx(6.0).epsilon(1e-12));
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data) sq += v * v;
  CHECK(std::sqrt(sq) == doctest::Approx(6.5).epsilon(1e-12));
}

TEST_CASE("clip rejects non-finite gradients") {
  TensorMap grads{{"w", Tensor::row({1.0, std::numeric_limits<double>::quiet_NaN()})}};
  CHECK_THROWS_WITH_AS(clip_grad_norm(grads, 5.0), doctest::Contains("'w'"), NumericsError);
}

TEST_CASE("first optimizer step moves by about lr in the gradient direction") {
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  TensorMap params{{"w", Tensor::row({1.0, -2.0})}};
  TensorMap grads{{"w", Tensor::row({0.5, -3.0})}};
  opt.step(params, grads);
  // Fresh state: bias-corrected moments give g / (|g| + eps), i.e. sign(g).
  CHECK(params["w"].data[0] ==
        doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + cfg.eps)).epsilon(1e-12));
  CHECK(params["w"].data[1] ==
        doctest::Approx(-2.0 + 0.01 * 3.0 / (3.0 + cfg.eps)).epsilon(1e-12));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient with fresh state shrinks by exactly one decay factor") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.05;
  AdamW opt(cfg);
  TensorMap params{{"w", Tensor::row({2.0})}};
  TensorMap grads{{"w", Tensor::row({0.0})}};
  opt.step(params, grads);
  CHECK(params["w"].data[0] == 2.0 * (1.0 - 0.1 * 0.05));
}

TEST_CASE("two steps match a hand-rolled reference update") {
  AdamWConfig cfg;
  cfg.lr = 0.02;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg);
  TensorMap params{{"w", Tensor::row({0.7})}};
  const double g1 = 0.3, g2 = -0.8;

  double p = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    p *= 1.0 - cfg.lr * cfg.weight_decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(cfg.beta1, t));
    const double vhat = v / (1.0 - std::pow(cfg.beta2, t));
    p -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }

  TensorMap grads{{"w", Tensor::row({g1})}};
  opt.step(params, grads);
  grads["w"].data[0] = g2;
  opt.step(params, grads);
  CHECK(params["w"].data[0] == doctest::Approx(p).epsilon(1e-14));
}

TEST_CASE("optimizer rejects missing, misshaped, and non-finite gradients") {
  AdamW opt;
  TensorMap params{{"w", Tensor::row({1.0})}};
  TensorMap empty;
  CHECK_THROWS_AS(opt.step(params, empty), ContractError);
  TensorMap wrong{{"w", Tensor({2, 1}, 0.0)}};
  CHECK_THROWS_AS(opt.step(params, wrong), ShapeError);
  TensorMap bad{{"w", Tensor::row({std::numeric_limits<double>::infinity()})}};
  CHECK_THROWS_WITH_AS(opt.step(params, bad), doctest::Contains("'w'"), NumericsError);
}

TEST_CASE("restored optimizer state reproduces the original trajectory") {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  AdamW opt(cfg);
  TensorMap params{{"w", Tensor::row({1.0, 2.0})}};
  TensorMap grads{{"w", Tensor::row({0.3, -0.2})}};
  opt.step(params, grads);
  opt.step(params, grads);

  const TensorMap snap_params = params;
  const TensorMap snap_m = opt.first_moments();
  const TensorMap snap_v = opt.second_moments();
  const std::int64_t snap_t = opt.step_count();

  opt.step(params, grads);
  const TensorMap after = params;

  AdamW fresh(cfg);
  fresh.restore(snap_t, snap_m, snap_v);
  TensorMap replay = snap_params;
  fresh.step(replay, grads);
  CHECK(replay.at("w").data == after.at("w").data);
}

TEST_CASE("optimizer drives a quadratic toward its minimum") {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  TensorMap params{{"x", Tensor::row({4.0, -3.0})}};
  const Tensor target = Tensor::row({1.0, 2.0});
  for (int it = 0; it < 400; ++it) {
    Graph g;
    const NodeId x = g.parameter(params.at("x"));
    const NodeId d = g.sub(x, g.constant(target));
    g.backward(g.sum(g.mul(d, d)));
    TensorMap grads{{"x", g.grad(x)}};
    clip_grad_norm(grads, 5.0);
    opt.step(params, grads);
  }
  CHECK(params["x"].data[0] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(params["x"].data[1] == doctest::Approx(2.0).epsilon(1e-2));
}

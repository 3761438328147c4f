#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsg/errors.hpp"
#include "dsg/graph.hpp"
#include "dsg/loss.hpp"
#include "dsg/rng.hpp"
#include "oracles.hpp"

using namespace dsg;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn3 = 1.0986122886681098;

double graph_loss(const Tensor& probs, const Tensor& targets, const RelLossConfig& cfg) {
  Graph g;
  const NodeId p = g.constant(probs);
  return g.value(relation_loss(g, p, targets, cfg)).data[0];
}

// Scalar-term reference for the batch builders (margin handled separately).
double ref_batch(const Tensor& probs, const Tensor& targets, const RelLossConfig& cfg) {
  if (cfg.kind == RelLossKind::kMlm) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < targets.data.size(); ++i) {
      (targets.data[i] != 0.0 ? pos : neg).push_back(probs.data[i]);
    }
    if (pos.empty() || neg.empty()) return 0.0;
    double acc = 0.0;
    for (double sp : pos) {
      for (double sn : neg) acc += margin_term(sp, sn, cfg.margin);
    }
    return acc / static_cast<double>(pos.size() * neg.size());
  }
  double acc = 0.0;
  for (int i = 0; i < targets.rows(); ++i) {
    for (int c = 0; c < targets.cols(); ++c) {
      const double p = probs.at(i, c);
      const int y = targets.at(i, c) != 0.0 ? 1 : 0;
      switch (cfg.kind) {
        case RelLossKind::kBce:
          acc += bce_term(p, y);
          break;
        case RelLossKind::kFocal:
          acc += focal_term(p, y, cfg.focal_gamma);
          break;
        case RelLossKind::kAr: {
          const double om =
              cfg.omega.empty() ? 1.0 : cfg.omega[static_cast<std::size_t>(c)];
          acc += ar_term(p, y, cfg.gamma_pos, cfg.gamma_neg, om);
          break;
        }
        case RelLossKind::kMlm:
          break;
      }
    }
  }
  return acc / static_cast<double>(targets.rows());
}

}  // namespace

TEST_CASE("scalar term frozen values") {
  CHECK(bce_term(0.5, 1) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(bce_term(0.5, 0) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(bce_term(1.0, 1) == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-9));
  CHECK(focal_term(0.5, 1, 2.0) == doctest::Approx(0.17328679513998632).epsilon(1e-12));
  CHECK(focal_term(0.5, 1, 0.0) == bce_term(0.5, 1));
  CHECK(ar_term(0.5, 1, 0, 0, 1.0) == bce_term(0.5, 1));
  CHECK(ar_term(0.5, 1, 1, 2, 2.0) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(ar_term(0.5, 0, 1, 2, 7.0) == doctest::Approx(0.25 * kLn2).epsilon(1e-12));
  CHECK(margin_term(0.2, 0.6, 1.0) == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(margin_term(0.9, 0.1, 0.5) == 0.0);
}

TEST_CASE("effective-number class weights") {
  CHECK(class_balance_weight(0.9, 2) == doctest::Approx(0.5263157894736844).epsilon(1e-12));
  CHECK(class_balance_weight(0.9, 10) == doctest::Approx(0.15353399327876294).epsilon(1e-12));
  CHECK(class_balance_weight(0.9, 100) == doctest::Approx(0.1000026562104414).epsilon(1e-12));
  CHECK(class_balance_weight(0.9, 0) == 1.0);   // neutral for unseen classes
  CHECK(class_balance_weight(0.9, 1) == 1.0);   // (1-b)/(1-b) exactly
  CHECK(class_balance_weight(0.0, 50) == 1.0);  // plain counting limit
  // More frequent classes always get smaller weights.
  double prev = 2.0;
  for (long long n : {1, 2, 5, 20, 100, 5000}) {
    const double w = class_balance_weight(0.99, n);
    CHECK(w < prev);
    CHECK(w > 0.0);
    prev = w;
  }
  CHECK_THROWS_AS(class_balance_weight(1.0, 5), ContractError);
  CHECK_THROWS_AS(class_balance_weight(-0.1, 5), ContractError);
  CHECK_THROWS_AS(class_balance_weight(0.9, -1), ContractError);

  const auto w = class_balance_weights({2, 0, 10}, 0.9);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx(0.5263157894736844).epsilon(1e-12));
  CHECK(w[1] == 1.0);
  CHECK(w[2] == doctest::Approx(0.15353399327876294).epsilon(1e-12));
}

TEST_CASE("asymmetric gamma ordering is enforced") {
  CHECK_THROWS_AS(ar_term(0.5, 1, 2.0, 1.0, 1.0), ContractError);
  CHECK_THROWS_AS(ar_term(0.5, 1, -0.5, 1.0, 1.0), ContractError);
  CHECK_THROWS_AS(focal_term(0.5, 1, -1.0), ContractError);
  Graph g;
  const NodeId p = g.constant(Tensor({1, 2}, {0.5, 0.5}));
  RelLossConfig cfg;
  cfg.kind = RelLossKind::kAr;
  cfg.gamma_pos = 3.0;
  cfg.gamma_neg = 1.0;
  CHECK_THROWS_AS(relation_loss(g, p, Tensor({1, 2}, {1, 0}), cfg), ContractError);
}

TEST_CASE("batch losses frozen values") {
  const Tensor probs({1, 2}, {0.5, 0.5});
  const Tensor targets({1, 2}, {1, 0});

  RelLossConfig bce;
  bce.kind = RelLossKind::kBce;
  CHECK(graph_loss(probs, targets, bce) == doctest::Approx(1.3862943611198906).epsilon(1e-12));

  RelLossConfig focal;
  focal.kind = RelLossKind::kFocal;
  focal.focal_gamma = 2.0;
  CHECK(graph_loss(probs, targets, focal) ==
        doctest::Approx(0.34657359027997264).epsilon(1e-12));

  RelLossConfig ar;
  ar.kind = RelLossKind::kAr;
  ar.gamma_pos = 1.0;
  ar.gamma_neg = 2.0;
  ar.omega = {2.0, 1.0};
  CHECK(graph_loss(probs, targets, ar) == doctest::Approx(0.8664339756999316).epsilon(1e-12));

  RelLossConfig mlm;
  mlm.kind = RelLossKind::kMlm;
  mlm.margin = 1.0;
  CHECK(graph_loss(Tensor({1, 2}, {0.8, 0.3}), targets, mlm) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("margin loss without a ranking constraint is exactly zero") {
  RelLossConfig mlm;
  mlm.kind = RelLossKind::kMlm;
  CHECK(graph_loss(Tensor({2, 2}, {0.1, 0.9, 0.4, 0.6}), Tensor({2, 2}, 0.0), mlm) == 0.0);
  CHECK(graph_loss(Tensor({1, 2}, {0.1, 0.9}), Tensor({1, 2}, 1.0), mlm) == 0.0);
}

TEST_CASE("plain cross entropy is the asymmetric loss at zero exponents, bitwise") {
  Rng rng(321);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 6);
    const int pd = rng.uniform_int(1, 5);
    Tensor probs({n, pd});
    Tensor targets({n, pd});
    for (double& v : probs.data) v = rng.uniform(0.02, 0.98);
    for (double& v : targets.data) v = rng.uniform01() < 0.4 ? 1.0 : 0.0;

    RelLossConfig bce;
    bce.kind = RelLossKind::kBce;
    RelLossConfig ar;
    ar.kind = RelLossKind::kAr;
    ar.gamma_pos = 0.0;
    ar.gamma_neg = 0.0;
    const double a = graph_loss(probs, targets, bce);
    const double b = graph_loss(probs, targets, ar);
    CHECK(a == b);  // identical node sequence, identical rounding

    RelLossConfig focal;
    focal.kind = RelLossKind::kFocal;
    focal.focal_gamma = 0.0;
    CHECK(std::abs(graph_loss(probs, targets, focal) - a) <= 1e-12);
  }
}

TEST_CASE("batch builders agree with the scalar reference") {
  Rng rng(654);
  const RelLossKind kinds[] = {RelLossKind::kBce, RelLossKind::kFocal, RelLossKind::kMlm,
                               RelLossKind::kAr};
  for (int trial = 0; trial < 60; ++trial) {
    const int n = rng.uniform_int(1, 5);
    const int pd = rng.uniform_int(1, 4);
    Tensor probs({n, pd});
    Tensor targets({n, pd});
    for (double& v : probs.data) v = rng.uniform(0.05, 0.95);
    for (double& v : targets.data) v = rng.uniform01() < 0.35 ? 1.0 : 0.0;

    RelLossConfig cfg;
    cfg.kind = kinds[trial % 4];
    cfg.gamma_pos = rng.uniform(0.0, 1.5);
    cfg.gamma_neg = cfg.gamma_pos + rng.uniform(0.0, 2.0);
    cfg.focal_gamma = rng.uniform(0.0, 3.0);
    cfg.margin = rng.uniform(0.2, 1.0);
    if (cfg.kind == RelLossKind::kAr && trial % 8 < 4) {
      cfg.omega.resize(static_cast<std::size_t>(pd));
      for (double& v : cfg.omega) v = rng.uniform(0.1, 2.0);
    }
    const double got = graph_loss(probs, targets, cfg);
    const double want = ref_batch(probs, targets, cfg);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("relation loss validates shapes, targets, and weights") {
  Graph g;
  const NodeId p = g.constant(Tensor({2, 3}, 0.5));
  RelLossConfig cfg;
  cfg.kind = RelLossKind::kBce;
  CHECK_THROWS_AS(relation_loss(g, p, Tensor({2, 2}, 0.0), cfg), ShapeError);
  CHECK_THROWS_AS(relation_loss(g, p, Tensor({2, 3}, 0.5), cfg), ContractError);
  RelLossConfig arw;
  arw.kind = RelLossKind::kAr;
  arw.omega = {1.0, 1.0};  // three predicates expected
  CHECK_THROWS_AS(relation_loss(g, p, Tensor({2, 3}, 0.0), arw), ShapeError);
}

TEST_CASE("object class loss frozen values and validation") {
  {
    Graph g;
    const NodeId logits = g.constant(Tensor({1, 2}, {0, 0}));
    CHECK(g.value(object_class_loss(g, logits, {0})).data[0] ==
          doctest::Approx(kLn2).epsilon(1e-9));
  }
  {
    Graph g;
    const NodeId logits = g.constant(Tensor({2, 3}, 0.0));
    CHECK(g.value(object_class_loss(g, logits, {1, 2})).data[0] ==
          doctest::Approx(kLn3).epsilon(1e-9));
  }
  {
    // A confident correct logit drives the loss toward zero.
    Graph g;
    const NodeId logits = g.constant(Tensor({1, 2}, {20, 0}));
    CHECK(g.value(object_class_loss(g, logits, {0})).data[0] < 1e-6);
  }
  {
    Graph g;
    const NodeId logits = g.constant(Tensor({2, 3}, 0.0));
    CHECK_THROWS_AS(object_class_loss(g, logits, {0}), ShapeError);
    CHECK_THROWS_AS(object_class_loss(g, logits, {0, 3}), ContractError);
    CHECK_THROWS_AS(object_class_loss(g, logits, {0, -1}), ContractError);
  }
}

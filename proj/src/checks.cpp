#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dsg/dataset.hpp"
#include "dsg/dtrans.hpp"
#include "dsg/gradcheck.hpp"
#include "dsg/graph.hpp"
#include "dsg/loss.hpp"
#include "dsg/pipeline.hpp"
#include "dsg/positional.hpp"
#include "dsg/rng.hpp"

namespace dsg {
namespace {

using Leaves = std::map<std::string, NodeId>;

Tensor rnd(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

// Magnitudes in [lo, hi] with random sign: keeps relu/layer-norm inputs away
// from their kinks so the central difference stays on one branch.
Tensor rnd_away(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    v = rng.uniform(lo, hi) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
  }
  return t;
}

void add_case(GradCheckSuite& suite, std::string name, TensorMap params, GraphBuilder build,
              int max_coords = 0) {
  GradCheckCase c;
  c.name = std::move(name);
  c.params = std::move(params);
  c.build = std::move(build);
  c.opts.max_coords_per_tensor = max_coords;
  suite.add(std::move(c));
}

// Scalar readout that gives every output coordinate its own weight, so a
// wrong gradient cannot hide behind a symmetric reduction.
NodeId weighted_sum(Graph& g, NodeId x, const Tensor& mask) {
  return g.sum(g.mul(x, g.constant(mask)));
}

// ---- primitive single-op cases ------------------------------------------

void add_primitives(GradCheckSuite& suite) {
  Rng rng(20240601);

  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}, {"b", rnd({3, 4}, rng, -2, 2)}};
    add_case(suite, "op.matmul", p,
             [](Graph& g, const Leaves& v) { return g.sum(g.matmul(v.at("a"), v.at("b"))); });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}, {"b", rnd({2, 3}, rng, -2, 2)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.add", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.add(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({3, 4}, rng, -2, 2)}, {"b", rnd({1, 4}, rng, -2, 2)}};
    Tensor m = rnd({3, 4}, rng, -1, 1);
    add_case(suite, "op.add_rowcast", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.add(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}, {"b", rnd({2, 3}, rng, -2, 2)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.sub", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.sub(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({3, 4}, rng, -2, 2)}, {"b", rnd({1, 4}, rng, -2, 2)}};
    Tensor m = rnd({3, 4}, rng, -1, 1);
    add_case(suite, "op.sub_rowcast", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.sub(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 4}, rng, -2, 2)}, {"b", rnd({2, 4}, rng, -2, 2)}};
    Tensor m = rnd({2, 4}, rng, -1, 1);
    add_case(suite, "op.mul", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.mul(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({3, 4}, rng, -2, 2)}, {"b", rnd({1, 4}, rng, -2, 2)}};
    Tensor m = rnd({3, 4}, rng, -1, 1);
    add_case(suite, "op.mul_rowcast", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.mul(v.at("a"), v.at("b")), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.scalar_mul", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.scalar_mul(v.at("a"), -1.7), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, 0.5, 2.0)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.pow_2", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.pow(v.at("a"), 2.0), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, 0.5, 2.0)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.pow_half", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.pow(v.at("a"), 0.5), m);
    });
  }
  {
    // Exponent zero must contribute an exactly-zero gradient.
    TensorMap p{{"a", rnd({2, 3}, rng, 0.5, 2.0)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.pow_0", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.pow(v.at("a"), 0.0), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, 0.5, 3.0)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.log", p,
             [m](Graph& g, const Leaves& v) { return weighted_sum(g, g.log(v.at("a")), m); });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}};
    Tensor m = rnd({2, 3}, rng, -1, 1);
    add_case(suite, "op.exp", p,
             [m](Graph& g, const Leaves& v) { return weighted_sum(g, g.exp(v.at("a")), m); });
  }
  {
    TensorMap p{{"a", rnd({2, 4}, rng, -4, 4)}};
    Tensor m = rnd({2, 4}, rng, -1, 1);
    add_case(suite, "op.sigmoid", p,
             [m](Graph& g, const Leaves& v) { return weighted_sum(g, g.sigmoid(v.at("a")), m); });
  }
  {
    TensorMap p{{"a", rnd({3, 5}, rng, -2, 2)}};
    Tensor m = rnd({3, 5}, rng, -1, 1);
    add_case(suite, "op.softmax_rows", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.softmax(v.at("a"), -1), m);
    });
  }
  {
    TensorMap p{{"a", rnd({3, 5}, rng, -2, 2)}};
    Tensor m = rnd({3, 5}, rng, -1, 1);
    add_case(suite, "op.softmax_cols", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.softmax(v.at("a"), 0), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 3}, rng, -2, 2)}, {"b", rnd({1, 3}, rng, -2, 2)}};
    Tensor m = rnd({3, 3}, rng, -1, 1);
    add_case(suite, "op.concat_rows", p, [m](Graph& g, const Leaves& v) {
      const std::array<NodeId, 2> parts{v.at("a"), v.at("b")};
      return weighted_sum(g, g.concat(parts, 0), m);
    });
  }
  {
    TensorMap p{{"a", rnd({2, 2}, rng, -2, 2)}, {"b", rnd({2, 3}, rng, -2, 2)}};
    Tensor m = rnd({2, 5}, rng, -1, 1);
    add_case(suite, "op.concat_cols", p, [m](Graph& g, const Leaves& v) {
      const std::array<NodeId, 2> parts{v.at("a"), v.at("b")};
      return weighted_sum(g, g.concat(parts, 1), m);
    });
  }
  {
    // Row 2 is taken twice: its gradient must accumulate both contributions.
    TensorMap p{{"a", rnd({4, 3}, rng, -2, 2)}};
    Tensor m = rnd({4, 3}, rng, -1, 1);
    add_case(suite, "op.gather_rows", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.gather_rows(v.at("a"), {0, 2, 2, 1}), m);
    });
  }
  {
    TensorMap p{{"a", rnd({3, 3}, rng, -2, 2)}};
    add_case(suite, "op.sum", p, [](Graph& g, const Leaves& v) { return g.sum(v.at("a")); });
  }
  {
    TensorMap p{{"a", rnd({3, 3}, rng, -2, 2)}};
    add_case(suite, "op.mean", p, [](Graph& g, const Leaves& v) { return g.mean(v.at("a")); });
  }
  {
    TensorMap p{{"a", rnd({2, 4}, rng, -2, 2)}};
    Tensor m = rnd({4, 2}, rng, -1, 1);
    add_case(suite, "op.transpose", p,
             [m](Graph& g, const Leaves& v) { return weighted_sum(g, g.transpose(v.at("a")), m); });
  }
  {
    TensorMap p{{"a", rnd_away({3, 6}, rng, 0.3, 3.0)}};
    Tensor m = rnd({3, 6}, rng, -1, 1);
    add_case(suite, "op.layer_norm", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.layer_norm(v.at("a")), m);
    });
  }
  {
    TensorMap p{{"a", rnd_away({3, 4}, rng, 0.5, 2.0)}};
    Tensor m = rnd({3, 4}, rng, -1, 1);
    add_case(suite, "op.relu", p,
             [m](Graph& g, const Leaves& v) { return weighted_sum(g, g.relu(v.at("a")), m); });
  }
  {
    TensorMap p{{"a", rnd({2, 6}, rng, -2, 2)}};
    Tensor m = rnd({3, 4}, rng, -1, 1);
    add_case(suite, "op.reshape", p, [m](Graph& g, const Leaves& v) {
      return weighted_sum(g, g.reshape(v.at("a"), {3, 4}), m);
    });
  }
  {
    // Small composite chain touching matmul, broadcast add, sigmoid, log.
    TensorMap p{{"a", rnd({3, 4}, rng, -1, 1)},
                {"b", rnd({4, 5}, rng, -1, 1)},
                {"c", rnd({1, 5}, rng, -1, 1)}};
    add_case(suite, "op.chain", p, [](Graph& g, const Leaves& v) {
      const NodeId z = g.add(g.matmul(v.at("a"), v.at("b")), v.at("c"));
      return g.mean(g.log(g.sigmoid(z)));
    });
  }
}

// ---- composed model blocks ----------------------------------------------

TensorMap attn_params(const std::string& prefix, int dim, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  TensorMap p;
  p[prefix + ".wq"] = rnd({dim, dim}, rng, -s, s);
  p[prefix + ".wk"] = rnd({dim, dim}, rng, -s, s);
  p[prefix + ".wv"] = rnd({dim, dim}, rng, -s, s);
  p[prefix + ".wo"] = rnd({dim, dim}, rng, -s, s);
  p[prefix + ".ffn_w1"] = rnd({dim, 2 * dim}, rng, -s, s);
  p[prefix + ".ffn_b1"] = rnd({1, 2 * dim}, rng, -0.1, 0.1);
  p[prefix + ".ffn_w2"] = rnd({2 * dim, dim}, rng, -s, s);
  p[prefix + ".ffn_b2"] = rnd({1, dim}, rng, -0.1, 0.1);
  return p;
}

AttnParams bind_attn(const std::string& prefix, const Leaves& v) {
  AttnParams p;
  p.wq = v.at(prefix + ".wq");
  p.wk = v.at(prefix + ".wk");
  p.wv = v.at(prefix + ".wv");
  p.wo = v.at(prefix + ".wo");
  p.ffn_w1 = v.at(prefix + ".ffn_w1");
  p.ffn_b1 = v.at(prefix + ".ffn_b1");
  p.ffn_w2 = v.at(prefix + ".ffn_w2");
  p.ffn_b2 = v.at(prefix + ".ffn_b2");
  return p;
}

// Two stacked post-norm blocks, cross-attention over an external context
// first (the temporal shape), then self-attention (the spatial shape).
void add_attention_stack(GradCheckSuite& suite, int instance, Rng& rng) {
  const int n = 3;
  const int dim = 8;
  const int heads = 2;
  TensorMap p = attn_params("b1", dim, rng);
  TensorMap p2 = attn_params("b2", dim, rng);
  p.insert(p2.begin(), p2.end());
  p["x"] = rnd({n, dim}, rng, -1, 1);
  p["ctx"] = rnd({4, dim}, rng, -1, 1);
  Tensor pos = positional_encoding({0, 1, 2}, dim);
  Tensor mask = rnd({n, dim}, rng, -1, 1);
  add_case(
      suite, "attention_stack[" + std::to_string(instance) + "]", std::move(p),
      [pos, mask, heads](Graph& g, const Leaves& v) {
        const NodeId x = v.at("x");
        const NodeId q = g.add(x, g.constant(pos));
        const NodeId y = transformer_block(g, x, q, v.at("ctx"), bind_attn("b1", v), heads);
        const NodeId z = transformer_block(g, y, y, y, bind_attn("b2", v), heads);
        return weighted_sum(g, z, mask);
      },
      4);
}

// Pair assembly (role projections, union feature, class embeddings), one
// relation block, classifier, and the asymmetric loss on top.
void add_relation_head(GradCheckSuite& suite, int instance, Rng& rng) {
  const int n = 3;
  const int dim = 8;
  const int union_dim = 6;
  const int embed = 4;
  const int classes = 3;
  const int preds = 4;
  const auto pairs = ordered_pairs(n);
  const int np = static_cast<int>(pairs.size());
  const int pair_dim = 2 * dim + union_dim + 2 * embed;

  TensorMap p = attn_params("rb", pair_dim, rng);
  p["x"] = rnd({n, dim}, rng, -1, 1);
  p["ws"] = rnd({dim, dim}, rng, -0.5, 0.5);
  p["wo"] = rnd({dim, dim}, rng, -0.5, 0.5);
  p["embed"] = rnd({classes, embed}, rng, -0.5, 0.5);
  p["wc"] = rnd({pair_dim, preds}, rng, -0.3, 0.3);
  p["bc"] = rnd({1, preds}, rng, -0.1, 0.1);

  std::vector<int> cls(n);
  for (int& c : cls) {
    c = rng.uniform_int(0, classes - 1);
  }
  std::vector<int> sub_idx, obj_idx, sub_cls, obj_cls;
  for (const auto& [s, o] : pairs) {
    sub_idx.push_back(s);
    obj_idx.push_back(o);
    sub_cls.push_back(cls[s]);
    obj_cls.push_back(cls[o]);
  }
  Tensor unions = rnd({np, union_dim}, rng, -1, 1);
  Tensor targets({np, preds});
  for (double& t : targets.data) {
    t = rng.uniform01() < 0.3 ? 1.0 : 0.0;
  }
  RelLossConfig cfg;
  cfg.kind = RelLossKind::kAr;
  cfg.gamma_pos = 1.0;
  cfg.gamma_neg = 3.0;
  cfg.omega.resize(preds);
  for (double& w : cfg.omega) {
    w = rng.uniform(0.5, 2.0);
  }

  add_case(
      suite, "relation_head[" + std::to_string(instance) + "]", std::move(p),
      [=](Graph& g, const Leaves& v) {
        const NodeId xs = g.gather_rows(g.matmul(v.at("x"), v.at("ws")), sub_idx);
        const NodeId xo = g.gather_rows(g.matmul(v.at("x"), v.at("wo")), obj_idx);
        const NodeId es = g.gather_rows(v.at("embed"), sub_cls);
        const NodeId eo = g.gather_rows(v.at("embed"), obj_cls);
        const std::array<NodeId, 5> parts{xs, xo, g.constant(unions), es, eo};
        const NodeId pair = g.concat(parts, 1);
        const NodeId mixed = transformer_block(g, pair, pair, pair, bind_attn("rb", v), 2);
        const NodeId logits = g.add(g.matmul(mixed, v.at("wc")), v.at("bc"));
        return relation_loss(g, g.sigmoid(logits), targets, cfg);
      },
      4);
}

void add_loss_case(GradCheckSuite& suite, const std::string& name, int instance,
                   RelLossKind kind, Rng& rng) {
  const int n = 5;
  const int preds = 6;
  TensorMap p{{"logits", rnd({n, preds}, rng, -2.5, 2.5)}};
  Tensor targets({n, preds});
  int positives = 0;
  for (double& t : targets.data) {
    t = rng.uniform01() < 0.3 ? 1.0 : 0.0;
    positives += t > 0.5 ? 1 : 0;
  }
  // The margin loss needs both sides present; every target matrix this size
  // has negatives, so only force a positive.
  if (positives == 0) {
    targets.data[rng.uniform_int(0, n * preds - 1)] = 1.0;
  }
  RelLossConfig cfg;
  cfg.kind = kind;
  cfg.focal_gamma = rng.uniform01() < 0.5 ? 2.0 : 0.5;
  cfg.gamma_pos = static_cast<double>(rng.uniform_int(0, 2));
  cfg.gamma_neg = cfg.gamma_pos + static_cast<double>(rng.uniform_int(0, 2));
  cfg.margin = rng.uniform(0.5, 1.5);
  if (kind == RelLossKind::kAr) {
    cfg.omega.resize(preds);
    for (double& w : cfg.omega) {
      w = rng.uniform(0.5, 2.0);
    }
  }
  add_case(suite, name + "[" + std::to_string(instance) + "]", std::move(p),
           [targets, cfg](Graph& g, const Leaves& v) {
             return relation_loss(g, g.sigmoid(v.at("logits")), targets, cfg);
           });
}

// Soft (fully differentiable) perturbed-logit selection: fixed noise per
// instance, gradients flow through the soft mixture weights.
void add_gumbel_soft(GradCheckSuite& suite, int instance, Rng& rng) {
  const int m = 4;
  const int dim = 6;
  const int k = 2;
  TensorMap p{{"q", rnd({1, dim}, rng, -1, 1)}, {"kv", rnd({m, dim}, rng, -1, 1)}};
  const double tau = rng.uniform01() < 0.5 ? 1.0 : 0.5;
  const std::uint64_t noise_seed = rng.next_u64();
  Tensor mask = rnd({k, dim}, rng, -1, 1);
  add_case(suite, "gumbel_soft[" + std::to_string(instance) + "]", std::move(p),
           [tau, noise_seed, mask, k](Graph& g, const Leaves& v) {
             Rng noise(noise_seed);
             const SelectedContext sel =
                 select_context(g, v.at("q"), v.at("kv"), k, tau, /*straight_through=*/false,
                                &noise);
             return weighted_sum(g, sel.rows, mask);
           });
}

// One end-to-end case: the full video forward pass (soft selection) with
// the asymmetric loss, probed at a few coordinates of every parameter.
void add_pipeline_case(GradCheckSuite& suite) {
  GeneratorConfig gen;
  gen.num_videos = 1;
  gen.test_fraction = 0.0;
  gen.frames_per_video = 2;
  gen.min_objects = 2;
  gen.max_objects = 2;
  gen.num_classes = 3;
  gen.num_predicates = 4;
  gen.feature_dim = 12;
  gen.union_dim = 12;
  gen.seed = 99;
  const Dataset ds = generate_dataset(gen);

  PipelineConfig model;
  model.feature_dim = 12;
  model.union_dim = 12;
  model.embed_dim = 4;
  model.heads = 2;
  model.temporal_layers = 1;
  model.spatial_layers = 1;
  model.relation_layers = 1;
  model.relation_heads = 2;
  model.context_k = 2;
  model.straight_through = false;
  model.num_classes = 3;
  model.num_predicates = 4;
  model.task = TaskMode::kSgCls;

  GradCheckCase c;
  c.name = "pipeline.full";
  c.params = init_params(model, 5);
  c.opts.max_coords_per_tensor = 2;
  const Video video = ds.train.at(0);
  c.build = [video, model](Graph& g, const Leaves& v) {
    BoundParams bound;
    bound.ids = v;
    Rng selector(31);
    const VideoRun run = run_video(g, bound, video, model, &selector);
    RelLossConfig cfg;
    cfg.kind = RelLossKind::kAr;
    const NodeId rel = relation_loss(g, run.relation_probs, run.relation_targets, cfg);
    return g.add(rel, object_class_loss(g, run.object_logits, run.object_labels));
  };
  suite.add(std::move(c));
}

}  // namespace

GradCheckSuite standard_suite() {
  GradCheckSuite suite;
  add_primitives(suite);

  Rng rng(424242);
  for (int i = 0; i < 50; ++i) {
    add_attention_stack(suite, i, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_relation_head(suite, i, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_loss_case(suite, "loss_bce", i, RelLossKind::kBce, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_loss_case(suite, "loss_focal", i, RelLossKind::kFocal, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_loss_case(suite, "loss_mlm", i, RelLossKind::kMlm, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_loss_case(suite, "loss_ar", i, RelLossKind::kAr, rng);
  }
  for (int i = 0; i < 50; ++i) {
    add_gumbel_soft(suite, i, rng);
  }
  add_pipeline_case(suite);
  return suite;
}

}  // namespace dsg

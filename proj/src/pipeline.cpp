#include "dsg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsg/errors.hpp"
#include "dsg/geometry.hpp"
#include "dsg/positional.hpp"

namespace dsg {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  bool zero_init = false;
};

void add_block_specs(std::vector<ParamSpec>& specs, const std::string& prefix, int dim) {
  specs.push_back({prefix + ".wq", {dim, dim}});
  specs.push_back({prefix + ".wk", {dim, dim}});
  specs.push_back({prefix + ".wv", {dim, dim}});
  specs.push_back({prefix + ".wo", {dim, dim}});
  specs.push_back({prefix + ".ffn.w1", {dim, 2 * dim}});
  specs.push_back({prefix + ".ffn.b1", {1, 2 * dim}, true});
  specs.push_back({prefix + ".ffn.w2", {2 * dim, dim}});
  specs.push_back({prefix + ".ffn.b2", {1, dim}, true});
}

std::vector<ParamSpec> param_specs(const PipelineConfig& cfg) {
  std::vector<ParamSpec> specs;
  const int d = cfg.feature_dim;
  specs.push_back({"object.w", {d, cfg.num_classes}});
  specs.push_back({"object.b", {1, cfg.num_classes}, true});
  specs.push_back({"embed.table", {cfg.num_classes, cfg.embed_dim}});
  specs.push_back({"union.w", {2 * d + 5, cfg.union_dim}});
  specs.push_back({"union.b", {1, cfg.union_dim}, true});
  for (int l = 0; l < cfg.temporal_layers; ++l) {
    add_block_specs(specs, "temporal." + std::to_string(l), d);
  }
  for (int l = 0; l < cfg.spatial_layers; ++l) {
    add_block_specs(specs, "spatial." + std::to_string(l), d);
  }
  specs.push_back({"relation.ws", {d, d}});
  specs.push_back({"relation.wo", {d, d}});
  for (int l = 0; l < cfg.relation_layers; ++l) {
    add_block_specs(specs, "relation.temporal." + std::to_string(l), cfg.pair_dim());
    add_block_specs(specs, "relation.spatial." + std::to_string(l), cfg.pair_dim());
  }
  specs.push_back({"relation.classifier.w", {cfg.pair_dim(), cfg.num_predicates}});
  specs.push_back({"relation.classifier.b", {1, cfg.num_predicates}, true});
  return specs;
}

AttnParams block_params(const BoundParams& p, const std::string& prefix) {
  return {p.at(prefix + ".wq"),     p.at(prefix + ".wk"),     p.at(prefix + ".wv"),
          p.at(prefix + ".wo"),     p.at(prefix + ".ffn.w1"), p.at(prefix + ".ffn.b1"),
          p.at(prefix + ".ffn.w2"), p.at(prefix + ".ffn.b2")};
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.cols(); ++c) {
    if (t.at(row, c) > t.at(row, best)) best = c;
  }
  return best;
}

std::vector<double> softmax_row(const Tensor& t, int row) {
  std::vector<double> out(static_cast<std::size_t>(t.cols()));
  double mx = t.at(row, 0);
  for (int c = 1; c < t.cols(); ++c) mx = std::max(mx, t.at(row, c));
  double denom = 0.0;
  for (int c = 0; c < t.cols(); ++c) {
    out[static_cast<std::size_t>(c)] = std::exp(t.at(row, c) - mx);
    denom += out[static_cast<std::size_t>(c)];
  }
  for (double& v : out) v /= denom;
  return out;
}

}  // namespace

void validate_config(const PipelineConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_predicates < 1) {
    throw ContractError("pipeline: class and predicate counts must be positive");
  }
  if (cfg.feature_dim < 1 || cfg.union_dim < 1 || cfg.embed_dim < 1) {
    throw ContractError("pipeline: feature widths must be positive");
  }
  if (cfg.feature_dim % 2 != 0) {
    throw ContractError("pipeline: feature_dim must be even for the position code");
  }
  if (cfg.union_dim % 2 != 0) {
    throw ContractError("pipeline: union_dim must be even so pair_dim admits a position code");
  }
  if (cfg.heads < 1 || cfg.feature_dim % cfg.heads != 0) {
    throw ContractError("pipeline: feature_dim " + std::to_string(cfg.feature_dim) +
                        " not divisible by " + std::to_string(cfg.heads) + " heads");
  }
  if (cfg.relation_heads < 1 || cfg.pair_dim() % cfg.relation_heads != 0) {
    throw ContractError("pipeline: pair width " + std::to_string(cfg.pair_dim()) +
                        " not divisible by " + std::to_string(cfg.relation_heads) + " heads");
  }
  if (cfg.temporal_layers < 0 || cfg.spatial_layers < 0 || cfg.relation_layers < 0) {
    throw ContractError("pipeline: layer counts must be >= 0");
  }
  if (cfg.context_k < 1) throw ContractError("pipeline: context_k must be >= 1");
  if (cfg.tau <= 0.0) throw ContractError("pipeline: tau must be positive");
}

TensorMap init_params(const PipelineConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  TensorMap params;
  for (const ParamSpec& spec : param_specs(cfg)) {
    Tensor t(spec.shape, 0.0);
    if (!spec.zero_init) {
      Rng rng(derive_seed(seed, {fnv1a(spec.name)}));
      const double fan_in = spec.shape[0];
      const double fan_out = spec.shape.size() > 1 ? spec.shape[1] : 1;
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.data) v = rng.uniform(-limit, limit);
    }
    params[spec.name] = std::move(t);
  }
  return params;
}

NodeId BoundParams::at(const std::string& name) const {
  const auto it = ids.find(name);
  if (it == ids.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

BoundParams bind_params(Graph& g, const TensorMap& params) {
  BoundParams bound;
  for (const auto& [name, value] : params) bound.ids[name] = g.parameter(value);
  return bound;
}

VideoRun run_video(Graph& g, const BoundParams& params, const Video& video,
                   const PipelineConfig& cfg, Rng* selector_rng) {
  validate_config(cfg);
  const int num_frames = static_cast<int>(video.frames.size());
  if (num_frames == 0) throw ContractError("run_video: video has no frames");

  VideoRun run;
  run.frame_object_offset.assign(1, 0);
  std::vector<std::vector<ObjectProposal>> proposals(static_cast<std::size_t>(num_frames));
  for (int t = 0; t < num_frames; ++t) {
    const Frame& frame = video.frames[static_cast<std::size_t>(t)];
    for (const FrameObject& obj : frame.objects) {
      if (static_cast<int>(obj.appearance.size()) != cfg.feature_dim) {
        throw ShapeError("object appearance has " + std::to_string(obj.appearance.size()) +
                         " dims, pipeline expects " + std::to_string(cfg.feature_dim));
      }
      if (static_cast<int>(obj.class_scores.size()) != cfg.num_classes) {
        throw ShapeError("object class scores have " + std::to_string(obj.class_scores.size()) +
                         " dims, pipeline expects " + std::to_string(cfg.num_classes));
      }
      run.object_labels.push_back(obj.gt_class);
      run.object_frame.push_back(t);
      proposals[static_cast<std::size_t>(t)].push_back(
          {obj.box, obj.appearance, obj.class_scores, obj.gt_class, obj.gt_track});
    }
    run.frame_object_offset.push_back(static_cast<int>(run.object_labels.size()));
  }
  const int n_obj = static_cast<int>(run.object_labels.size());
  if (n_obj == 0) throw ContractError("run_video: video has no objects");

  // Flat frame-major feature matrix; frames slice it by row ranges.
  Tensor features({n_obj, cfg.feature_dim}, 0.0);
  Tensor det_scores({n_obj, cfg.num_classes}, 0.0);
  {
    int row = 0;
    for (int t = 0; t < num_frames; ++t) {
      for (const FrameObject& obj : video.frames[static_cast<std::size_t>(t)].objects) {
        for (int d = 0; d < cfg.feature_dim; ++d) {
          features.at(row, d) = obj.appearance[static_cast<std::size_t>(d)];
        }
        for (int c = 0; c < cfg.num_classes; ++c) {
          det_scores.at(row, c) = obj.class_scores[static_cast<std::size_t>(c)];
        }
        ++row;
      }
    }
  }
  const NodeId x0 = g.constant(std::move(features));
  auto obj_row = [&](int frame, int slot) {
    return run.frame_object_offset[static_cast<std::size_t>(frame)] + slot;
  };

  std::vector<int> frame_sizes(static_cast<std::size_t>(num_frames));
  for (int t = 0; t < num_frames; ++t) {
    frame_sizes[static_cast<std::size_t>(t)] =
        static_cast<int>(proposals[static_cast<std::size_t>(t)].size());
  }
  run.tracklets = link_objects(proposals, cfg.link_threshold);
  const auto hoods = build_neighborhoods(run.tracklets, frame_sizes);

  // Frame position codes over the whole video, shared by every query.
  std::vector<int> all_frames(static_cast<std::size_t>(num_frames));
  for (int t = 0; t < num_frames; ++t) all_frames[static_cast<std::size_t>(t)] = t;
  const Tensor frame_code = positional_encoding(all_frames, cfg.feature_dim);

  NodeId x = x0;
  if (cfg.denoise) {
    // Context selection from the raw features: each object scores its
    // tracklet siblings (position-coded) and keeps context_k of them.
    std::vector<NodeId> contexts(static_cast<std::size_t>(n_obj));
    for (int t = 0; t < num_frames; ++t) {
      for (int j = 0; j < frame_sizes[static_cast<std::size_t>(t)]; ++j) {
        const int row = obj_row(t, j);
        const NodeId query = g.gather_rows(x0, {row});
        const auto& members = hoods[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)]
                                  .members;
        NodeId kv;  // stays invalid for singleton tracklets
        if (!members.empty()) {
          std::vector<int> rows;
          Tensor codes({static_cast<int>(members.size()), cfg.feature_dim}, 0.0);
          for (std::size_t m = 0; m < members.size(); ++m) {
            rows.push_back(obj_row(members[m].first, members[m].second));
            for (int d = 0; d < cfg.feature_dim; ++d) {
              codes.at(static_cast<int>(m), d) = frame_code.at(members[m].first, d);
            }
          }
          kv = g.add(g.gather_rows(x0, std::move(rows)), g.constant(std::move(codes)));
        }
        contexts[static_cast<std::size_t>(row)] =
            select_context(g, query, kv, cfg.context_k, cfg.tau, cfg.straight_through,
                           selector_rng)
                .rows;
      }
    }

    // Temporal stack: queries evolve layer to layer, contexts stay fixed.
    for (int l = 0; l < cfg.temporal_layers; ++l) {
      const AttnParams p = block_params(params, "temporal." + std::to_string(l));
      std::vector<NodeId> rows(static_cast<std::size_t>(n_obj));
      for (int row = 0; row < n_obj; ++row) {
        const NodeId self = g.gather_rows(x, {row});
        Tensor code({1, cfg.feature_dim}, 0.0);
        for (int d = 0; d < cfg.feature_dim; ++d) {
          code.at(0, d) = frame_code.at(run.object_frame[static_cast<std::size_t>(row)], d);
        }
        const NodeId q_in = g.add(self, g.constant(std::move(code)));
        rows[static_cast<std::size_t>(row)] = transformer_block(
            g, self, q_in, contexts[static_cast<std::size_t>(row)], p, cfg.heads);
      }
      x = g.concat(rows, 0);
    }

    // Spatial stack: plain self-attention inside each frame.
    for (int l = 0; l < cfg.spatial_layers; ++l) {
      const AttnParams p = block_params(params, "spatial." + std::to_string(l));
      std::vector<NodeId> frames_out;
      for (int t = 0; t < num_frames; ++t) {
        const int nf = frame_sizes[static_cast<std::size_t>(t)];
        if (nf == 0) continue;  // empty frames own no rows
        std::vector<int> rows(static_cast<std::size_t>(nf));
        std::iota(rows.begin(), rows.end(), run.frame_object_offset[static_cast<std::size_t>(t)]);
        const NodeId xf = g.gather_rows(x, std::move(rows));
        frames_out.push_back(transformer_block(g, xf, xf, xf, p, cfg.heads));
      }
      x = g.concat(frames_out, 0);
    }
  }
  run.object_features = x;

  // Class logits refine the detector's noisy scores.
  run.object_logits = g.add(g.add(g.matmul(x, params.at("object.w")), params.at("object.b")),
                            g.constant(std::move(det_scores)));

  // Class each object contributes to the pair features: ground truth while
  // training (and always for the task that provides classes), the model's
  // own prediction when an SGCLS model is evaluated.
  std::vector<int> embed_class(run.object_labels.begin(), run.object_labels.end());
  if (cfg.task == TaskMode::kSgCls && selector_rng == nullptr) {
    const Tensor& logits = g.value(run.object_logits);
    for (int row = 0; row < n_obj; ++row) {
      embed_class[static_cast<std::size_t>(row)] = argmax_row(logits, row);
    }
  }
  for (int row = 0; row < n_obj; ++row) {
    const int c = embed_class[static_cast<std::size_t>(row)];
    if (c < 0 || c >= cfg.num_classes) {
      throw ContractError("object class " + std::to_string(c) + " outside [0, " +
                          std::to_string(cfg.num_classes) + ")");
    }
  }

  // Pair features per frame: role projections, union feature, embeddings.
  const NodeId subj_proj = g.matmul(x, params.at("relation.ws"));
  const NodeId obj_proj = g.matmul(x, params.at("relation.wo"));
  run.frame_pair_offset.assign(1, 0);
  std::vector<NodeId> frame_pair_rows;
  for (int t = 0; t < num_frames; ++t) {
    const Frame& frame = video.frames[static_cast<std::size_t>(t)];
    const int nf = frame_sizes[static_cast<std::size_t>(t)];
    const auto pairs = ordered_pairs(nf);
    if (!pairs.empty()) {
      if (cfg.use_precomputed_union &&
          frame.union_features.size() != pairs.size()) {
        throw ShapeError("frame has " + std::to_string(frame.union_features.size()) +
                         " union features for " + std::to_string(pairs.size()) + " pairs");
      }
      std::vector<int> subj_rows, obj_rows, subj_cls, obj_cls;
      Tensor unions({static_cast<int>(pairs.size()), cfg.union_dim}, 0.0);
      Tensor geom({static_cast<int>(pairs.size()), 5}, 0.0);
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        const int rs = obj_row(t, pairs[q].first);
        const int ro = obj_row(t, pairs[q].second);
        subj_rows.push_back(rs);
        obj_rows.push_back(ro);
        subj_cls.push_back(embed_class[static_cast<std::size_t>(rs)]);
        obj_cls.push_back(embed_class[static_cast<std::size_t>(ro)]);
        if (cfg.use_precomputed_union) {
          const auto& u = frame.union_features[q];
          if (static_cast<int>(u.size()) != cfg.union_dim) {
            throw ShapeError("union feature has " + std::to_string(u.size()) +
                             " dims, pipeline expects " + std::to_string(cfg.union_dim));
          }
          for (int d = 0; d < cfg.union_dim; ++d) {
            unions.at(static_cast<int>(q), d) = u[static_cast<std::size_t>(d)];
          }
        } else {
          const auto gfeat = pair_geometry(frame.objects[static_cast<std::size_t>(pairs[q].first)].box,
                                           frame.objects[static_cast<std::size_t>(pairs[q].second)].box);
          for (int d = 0; d < 5; ++d) geom.at(static_cast<int>(q), d) = gfeat[static_cast<std::size_t>(d)];
        }
        run.pair_slots.push_back(pairs[q]);
        run.pair_frame.push_back(t);
      }
      NodeId union_node;
      if (cfg.use_precomputed_union) {
        union_node = g.constant(std::move(unions));
      } else {
        const std::vector<NodeId> u_in{g.gather_rows(x, subj_rows), g.gather_rows(x, obj_rows),
                                       g.constant(std::move(geom))};
        union_node = g.add(g.matmul(g.concat(u_in, 1), params.at("union.w")),
                           params.at("union.b"));
      }
      const std::vector<NodeId> parts{
          g.gather_rows(subj_proj, std::move(subj_rows)),
          g.gather_rows(obj_proj, std::move(obj_rows)), union_node,
          g.gather_rows(params.at("embed.table"), std::move(subj_cls)),
          g.gather_rows(params.at("embed.table"), std::move(obj_cls))};
      frame_pair_rows.push_back(g.concat(parts, 1));
    }
    run.frame_pair_offset.push_back(static_cast<int>(run.pair_slots.size()));
  }
  const int n_pairs = static_cast<int>(run.pair_slots.size());
  if (n_pairs == 0) throw ContractError("run_video: video has no object pairs");
  NodeId r = g.concat(frame_pair_rows, 0);  // [n_pairs, pair_dim]

  // Relation temporal stack: rows sharing (subject tracklet, object
  // tracklet) form one sequence; each row attends over the whole sequence
  // (self included) with frame position codes on both sides.
  const auto track_of = tracklet_index(run.tracklets, frame_sizes);
  const Tensor pair_code = positional_encoding(all_frames, cfg.pair_dim());
  std::map<std::pair<int, int>, std::vector<int>> sequences;
  for (int p = 0; p < n_pairs; ++p) {
    const int t = run.pair_frame[static_cast<std::size_t>(p)];
    const auto [s, o] = run.pair_slots[static_cast<std::size_t>(p)];
    sequences[{track_of[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)],
               track_of[static_cast<std::size_t>(t)][static_cast<std::size_t>(o)]}]
        .push_back(p);
  }
  for (int l = 0; l < cfg.relation_layers; ++l) {
    const AttnParams p = block_params(params, "relation.temporal." + std::to_string(l));
    std::vector<NodeId> rows(static_cast<std::size_t>(n_pairs));
    for (const auto& [key, seq] : sequences) {
      Tensor codes({static_cast<int>(seq.size()), cfg.pair_dim()}, 0.0);
      for (std::size_t m = 0; m < seq.size(); ++m) {
        const int frame = run.pair_frame[static_cast<std::size_t>(seq[m])];
        for (int d = 0; d < cfg.pair_dim(); ++d) {
          codes.at(static_cast<int>(m), d) = pair_code.at(frame, d);
        }
      }
      const NodeId block = g.gather_rows(r, seq);
      const NodeId coded = g.add(block, g.constant(std::move(codes)));
      const NodeId out = transformer_block(g, block, coded, coded, p, cfg.relation_heads);
      for (std::size_t m = 0; m < seq.size(); ++m) {
        rows[static_cast<std::size_t>(seq[m])] = g.gather_rows(out, {static_cast<int>(m)});
      }
    }
    r = g.concat(rows, 0);
  }

  // Relation spatial stack: self-attention among the pairs of each frame.
  for (int l = 0; l < cfg.relation_layers; ++l) {
    const AttnParams p = block_params(params, "relation.spatial." + std::to_string(l));
    std::vector<NodeId> frames_out;
    for (int t = 0; t < num_frames; ++t) {
      const int from = run.frame_pair_offset[static_cast<std::size_t>(t)];
      const int to = run.frame_pair_offset[static_cast<std::size_t>(t) + 1];
      if (from == to) continue;
      std::vector<int> rows(static_cast<std::size_t>(to - from));
      std::iota(rows.begin(), rows.end(), from);
      const NodeId rf = g.gather_rows(r, std::move(rows));
      frames_out.push_back(transformer_block(g, rf, rf, rf, p, cfg.relation_heads));
    }
    r = g.concat(frames_out, 0);
  }

  run.relation_logits = g.add(g.matmul(r, params.at("relation.classifier.w")),
                              params.at("relation.classifier.b"));
  run.relation_probs = g.sigmoid(run.relation_logits);

  // 0/1 target matrix aligned with the pair rows.
  run.relation_targets = Tensor({n_pairs, cfg.num_predicates}, 0.0);
  for (int t = 0; t < num_frames; ++t) {
    const Frame& frame = video.frames[static_cast<std::size_t>(t)];
    const int nf = frame_sizes[static_cast<std::size_t>(t)];
    for (const RelationAnnotation& rel : frame.relations) {
      if (rel.subject < 0 || rel.subject >= nf || rel.object < 0 || rel.object >= nf ||
          rel.subject == rel.object) {
        throw ContractError("relation (" + std::to_string(rel.subject) + "," +
                            std::to_string(rel.object) + ") invalid for a frame with " +
                            std::to_string(nf) + " objects");
      }
      if (rel.predicate < 0 || rel.predicate >= cfg.num_predicates) {
        throw ContractError("relation predicate " + std::to_string(rel.predicate) +
                            " outside [0, " + std::to_string(cfg.num_predicates) + ")");
      }
      // Subject-major enumeration: row of (s, o) among ordered pairs.
      const int local = rel.subject * (nf - 1) + (rel.object < rel.subject ? rel.object
                                                                           : rel.object - 1);
      run.relation_targets.at(run.frame_pair_offset[static_cast<std::size_t>(t)] + local,
                              rel.predicate) = 1.0;
    }
  }
  return run;
}

std::vector<FrameEval> build_frame_evals(const Graph& g, const VideoRun& run, const Video& video,
                                         const PipelineConfig& cfg, ConstraintMode mode,
                                         int cap) {
  const Tensor& probs = g.value(run.relation_probs);
  const Tensor& logits = g.value(run.object_logits);
  const int num_frames = static_cast<int>(video.frames.size());
  std::vector<FrameEval> evals;
  for (int t = 0; t < num_frames; ++t) {
    const int from = run.frame_pair_offset[static_cast<std::size_t>(t)];
    const int to = run.frame_pair_offset[static_cast<std::size_t>(t) + 1];
    FrameEval fe;
    if (to > from) {
      std::vector<std::pair<int, int>> pairs;
      std::vector<double> s_sub, s_obj;
      std::vector<char> class_ok;
      Tensor frame_probs({to - from, cfg.num_predicates}, 0.0);
      for (int p = from; p < to; ++p) {
        pairs.push_back(run.pair_slots[static_cast<std::size_t>(p)]);
        for (int k = 0; k < cfg.num_predicates; ++k) {
          frame_probs.at(p - from, k) = probs.at(p, k);
        }
        if (cfg.task == TaskMode::kPredCls) {
          s_sub.push_back(1.0);
          s_obj.push_back(1.0);
          class_ok.push_back(1);
        } else {
          const int rs = run.frame_object_offset[static_cast<std::size_t>(t)] +
                         run.pair_slots[static_cast<std::size_t>(p)].first;
          const int ro = run.frame_object_offset[static_cast<std::size_t>(t)] +
                         run.pair_slots[static_cast<std::size_t>(p)].second;
          const int cs = argmax_row(logits, rs);
          const int co = argmax_row(logits, ro);
          s_sub.push_back(softmax_row(logits, rs)[static_cast<std::size_t>(cs)]);
          s_obj.push_back(softmax_row(logits, ro)[static_cast<std::size_t>(co)]);
          const bool ok = cs == run.object_labels[static_cast<std::size_t>(rs)] &&
                          co == run.object_labels[static_cast<std::size_t>(ro)];
          class_ok.push_back(ok ? 1 : 0);
        }
      }
      fe.ranked = rank_predictions(frame_probs, pairs, s_sub, s_obj, class_ok, mode, cap);
    }
    for (const RelationAnnotation& rel : video.frames[static_cast<std::size_t>(t)].relations) {
      fe.gt.push_back({rel.subject, rel.object, rel.predicate});
    }
    evals.push_back(std::move(fe));
  }
  return evals;
}

}  // namespace dsg

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsg/dataset.hpp"
#include "dsg/dtrans.hpp"
#include "dsg/eval.hpp"
#include "dsg/graph.hpp"
#include "dsg/matching.hpp"
#include "dsg/tensor.hpp"

namespace dsg {

// PredCLS hands the model ground-truth classes (endpoint confidence 1);
// SGCLS makes it classify objects too, and a relation only hits when both
// predicted endpoint classes are right.
enum class TaskMode { kPredCls, kSgCls };

struct PipelineConfig {
  int feature_dim = 64;   // must match the dataset
  int union_dim = 64;     // must match the dataset (even for the pair code)
  int embed_dim = 16;     // class embedding width
  int heads = 4;
  int temporal_layers = 3;
  int spatial_layers = 3;
  int relation_layers = 1;  // depth of each relation sub-stack
  int relation_heads = 4;
  int context_k = 8;   // rows selected per temporal neighborhood
  double tau = 1.0;    // selection temperature
  double link_threshold = 0.5;
  bool denoise = true;  // temporal+spatial object stacks (ablation switch)
  bool use_precomputed_union = true;
  bool straight_through = true;
  int num_classes = 0;
  int num_predicates = 0;
  TaskMode task = TaskMode::kPredCls;

  // Pair feature width: role-projected endpoints + union + two embeddings.
  int pair_dim() const { return 2 * feature_dim + union_dim + 2 * embed_dim; }
};

// Throws ContractError when dimensions are inconsistent (head divisibility,
// even widths for the position codes, empty class/predicate sets).
void validate_config(const PipelineConfig& config);

// Deterministic parameter init: every tensor gets its own random stream
// keyed by a hash of its name, uniform Xavier bounds for matrices, zeros
// for biases. Same seed, same parameters, independent of creation order.
TensorMap init_params(const PipelineConfig& config, std::uint64_t seed);

// Parameter leaves bound into a live graph, keyed by name.
struct BoundParams {
  std::map<std::string, NodeId> ids;
  NodeId at(const std::string& name) const;
};

BoundParams bind_params(Graph& g, const TensorMap& params);

// Everything one forward pass produces for a video, with the bookkeeping
// needed to cut the flat rows back into frames.
struct VideoRun {
  NodeId object_features;  // [n_objects, D] after denoising
  NodeId object_logits;    // [n_objects, C]
  NodeId relation_logits;  // [n_pairs, P]
  NodeId relation_probs;   // sigmoid of the logits
  Tensor relation_targets;            // [n_pairs, P] 0/1
  std::vector<int> object_labels;     // ground-truth class per object row
  std::vector<int> object_frame;      // frame of each object row
  std::vector<std::pair<int, int>> pair_slots;  // in-frame (subject, object)
  std::vector<int> pair_frame;
  std::vector<int> frame_object_offset;  // size F+1, row ranges per frame
  std::vector<int> frame_pair_offset;    // size F+1
  std::vector<Tracklet> tracklets;
};

// Builds the full forward graph for one video. selector_rng drives the
// stochastic context selection during training; pass nullptr for the
// deterministic evaluation path (which also switches SGCLS embeddings from
// ground-truth classes to the model's own predictions).
VideoRun run_video(Graph& g, const BoundParams& params, const Video& video,
                   const PipelineConfig& config, Rng* selector_rng);

// Ranked predictions plus ground truth per frame, ready for the metrics.
std::vector<FrameEval> build_frame_evals(const Graph& g, const VideoRun& run, const Video& video,
                                         const PipelineConfig& config, ConstraintMode mode,
                                         int cap = 100);

}  // namespace dsg

#include "dsg/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dsg/binio.hpp"
#include "dsg/graph.hpp"
#include "dsg/loss.hpp"
#include "dsg/pipeline.hpp"
#include "dsg/rng.hpp"

namespace dsg {
namespace {

// Stream tags for derived seeds; disjoint from the dataset generator's tags.
constexpr std::uint64_t kTagOrder = 0xC3;
constexpr std::uint64_t kTagSelector = 0xD4;

constexpr char kCheckpointMagic[4] = {'T', 'D', 'C', 'K'};

void append_tensor_map(std::vector<std::uint8_t>& out, const TensorMap& map) {
  append_u32(out, static_cast<std::uint32_t>(map.size()));
  for (const auto& [name, t] : map) {
    append_u32(out, static_cast<std::uint32_t>(name.size()));
    append_bytes(out, name.data(), name.size());
    append_u8(out, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape) {
      append_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) {
      append_f64(out, v);
    }
  }
}

TensorMap read_tensor_map(Cursor& cur, const std::string& section) {
  TensorMap map;
  const std::uint32_t count = cur.read_u32(section + ".count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string item = section + "[" + std::to_string(i) + "]";
    const std::uint32_t name_len = cur.read_u32(item + ".name_len");
    std::string name(name_len, '\0');
    cur.read_bytes(name.data(), name_len, item + ".name");
    const std::uint8_t rank = cur.read_u8(item + ".rank");
    if (rank < 1 || rank > 2) {
      throw ParseError("checkpoint: " + item + " has unsupported rank " + std::to_string(rank));
    }
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = cur.read_u32(item + ".dim");
      if (dim == 0 || dim > (1u << 24)) {
        throw ParseError("checkpoint: " + item + " has invalid dimension " + std::to_string(dim));
      }
      shape[d] = static_cast<int>(dim);
      numel *= dim;
    }
    std::vector<double> data(numel);
    for (std::size_t e = 0; e < numel; ++e) {
      data[e] = cur.read_f64(item + ".data");
    }
    if (!map.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw ParseError("checkpoint: duplicate tensor name '" + name + "' in " + section);
    }
  }
  return map;
}

// Fields that do not influence the parameter trajectory up to the
// checkpointed epoch are normalized away before comparing configurations,
// so a run can be extended or its dataset file relocated and still resume.
std::string trajectory_fingerprint(RunConfig config) {
  config.epochs = 0;
  config.dataset.clear();
  return run_config_to_json(config);
}

}  // namespace

PipelineConfig apply_dataset_dims(PipelineConfig model, const DatasetMeta& meta) {
  model.feature_dim = meta.feature_dim;
  model.union_dim = meta.union_dim;
  model.num_classes = meta.num_classes;
  model.num_predicates = meta.num_predicates;
  return model;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::vector<std::uint8_t> out;
  append_bytes(out, kCheckpointMagic, 4);
  append_u32(out, kCheckpointFormatVersion);
  const std::string config_json = run_config_to_json(ckpt.config);
  append_u32(out, static_cast<std::uint32_t>(config_json.size()));
  append_bytes(out, config_json.data(), config_json.size());
  append_u64(out, static_cast<std::uint64_t>(ckpt.epochs_completed));
  append_u64(out, static_cast<std::uint64_t>(ckpt.optimizer_step));
  append_tensor_map(out, ckpt.params);
  append_tensor_map(out, ckpt.adam_m);
  append_tensor_map(out, ckpt.adam_v);
  write_file_bytes(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  Cursor cur(bytes);
  char magic[4];
  cur.read_bytes(magic, 4, "checkpoint.magic");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw ParseError("checkpoint: bad magic at offset 0 (expected TDCK)");
  }
  const std::uint32_t version = cur.read_u32("checkpoint.version");
  if (version != kCheckpointFormatVersion) {
    throw VersionError("checkpoint: unsupported version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  const std::uint32_t config_len = cur.read_u32("checkpoint.config_len");
  std::string config_json(config_len, '\0');
  cur.read_bytes(config_json.data(), config_len, "checkpoint.config");

  Checkpoint ckpt;
  ckpt.config = run_config_from_json(config_json);
  ckpt.epochs_completed = static_cast<int>(cur.read_u64("checkpoint.epochs_completed"));
  ckpt.optimizer_step = static_cast<std::int64_t>(cur.read_u64("checkpoint.optimizer_step"));
  ckpt.params = read_tensor_map(cur, "params");
  ckpt.adam_m = read_tensor_map(cur, "adam_m");
  ckpt.adam_v = read_tensor_map(cur, "adam_v");
  if (!cur.at_end()) {
    throw ParseError("checkpoint: " + std::to_string(cur.remaining()) +
                     " trailing bytes after offset " + std::to_string(cur.offset()));
  }
  return ckpt;
}

namespace {

RelLossConfig resolve_loss(const Dataset& dataset, const RunConfig& config, int num_predicates) {
  RelLossConfig loss = config.loss;
  if (config.class_balance && loss.kind == RelLossKind::kAr) {
    const std::vector<long long> counts = predicate_counts(dataset.train, num_predicates);
    loss.omega = class_balance_weights(counts, config.class_balance_beta);
    // Rescale to mean 1 over the predicates that actually occur. The raw
    // weights shrink like 1/n, which would crush every positive term against
    // the unweighted negatives; only their relative sizes should matter.
    double sum = 0.0;
    int present = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] > 0) {
        sum += loss.omega[i];
        ++present;
      }
    }
    if (present > 0 && sum > 0.0) {
      const double scale = present / sum;
      for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) loss.omega[i] *= scale;
      }
    }
  }
  return loss;
}

NodeId video_loss(Graph& g, const VideoRun& run, const PipelineConfig& model,
                  const RelLossConfig& loss_cfg) {
  NodeId loss = relation_loss(g, run.relation_probs, run.relation_targets, loss_cfg);
  if (model.task == TaskMode::kSgCls) {
    loss = g.add(loss, object_class_loss(g, run.object_logits, run.object_labels));
  }
  return loss;
}

}  // namespace

TrainResult train_run(const Dataset& dataset, const RunConfig& config,
                      const std::string& checkpoint_path, const std::string& log_path,
                      const std::string& resume_from, std::ostream* progress) {
  if (dataset.train.empty()) {
    throw ContractError("train_run: dataset has no training videos");
  }
  if (config.epochs < 0) {
    throw ContractError("train_run: epochs must be >= 0");
  }
  const PipelineConfig model = apply_dataset_dims(config.model, dataset.meta);
  validate_config(model);
  const RelLossConfig loss_cfg = resolve_loss(dataset, config, model.num_predicates);

  TensorMap params = init_params(model, config.seed);
  AdamW opt(config.optimizer);
  int start_epoch = 0;
  if (!resume_from.empty()) {
    Checkpoint ckpt = read_checkpoint(resume_from);
    if (trajectory_fingerprint(ckpt.config) != trajectory_fingerprint(config)) {
      throw ContractError("train_run: checkpoint " + resume_from +
                          " was produced by a different configuration");
    }
    if (ckpt.epochs_completed > config.epochs) {
      throw ContractError("train_run: checkpoint already has " +
                          std::to_string(ckpt.epochs_completed) + " epochs, requested " +
                          std::to_string(config.epochs));
    }
    params = std::move(ckpt.params);
    opt.restore(ckpt.optimizer_step, std::move(ckpt.adam_m), std::move(ckpt.adam_v));
    start_epoch = ckpt.epochs_completed;
  }

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!log) {
      throw ContractError("train_run: cannot open log file " + log_path);
    }
  }

  TrainResult result;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<int> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(config.seed, {kTagOrder, static_cast<std::uint64_t>(epoch)}));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[order_rng.uniform_int(0, i)]);
    }

    double loss_sum = 0.0;
    double norm_sum = 0.0;
    int stepped = 0;
    for (int vi : order) {
      const Video& video = dataset.train[vi];
      Graph g;
      BoundParams bound = bind_params(g, params);
      Rng selector(
          derive_seed(config.seed, {kTagSelector, static_cast<std::uint64_t>(epoch), video.id}));
      VideoRun run = run_video(g, bound, video, model, &selector);
      if (run.relation_targets.empty()) {
        continue;  // nothing to supervise in this video
      }
      const NodeId loss = video_loss(g, run, model, loss_cfg);
      const double loss_value = g.value(loss).data[0];
      if (!std::isfinite(loss_value)) {
        throw NumericsError("train_run: non-finite loss at epoch " + std::to_string(epoch) +
                            ", video " + std::to_string(video.id));
      }
      g.backward(loss);
      TensorMap grads;
      for (const auto& [name, id] : bound.ids) {
        grads.emplace(name, g.grad(id));
      }
      norm_sum += clip_grad_norm(grads, config.clip_norm);
      opt.step(params, grads);
      loss_sum += loss_value;
      ++stepped;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.videos = stepped;
    stats.mean_loss = stepped > 0 ? loss_sum / stepped : 0.0;
    stats.mean_grad_norm = stepped > 0 ? norm_sum / stepped : 0.0;
    result.history.push_back(stats);

    if (progress != nullptr) {
      *progress << "epoch " << (epoch + 1) << "/" << config.epochs << "  loss " << stats.mean_loss
                << "  grad_norm " << stats.mean_grad_norm << "  videos " << stats.videos
                << std::endl;
    }
    if (log.is_open()) {
      nlohmann::json line;
      line["epoch"] = stats.epoch;
      line["videos"] = stats.videos;
      line["mean_loss"] = stats.mean_loss;
      line["mean_grad_norm"] = stats.mean_grad_norm;
      log << line.dump() << "\n" << std::flush;
    }
    if (!checkpoint_path.empty()) {
      Checkpoint ckpt;
      ckpt.config = config;
      ckpt.epochs_completed = epoch + 1;
      ckpt.optimizer_step = opt.step_count();
      ckpt.params = params;
      ckpt.adam_m = opt.first_moments();
      ckpt.adam_v = opt.second_moments();
      write_checkpoint(ckpt, checkpoint_path);
    }
  }
  result.params = std::move(params);
  return result;
}

EvalResult evaluate_videos(const std::vector<Video>& videos, const TensorMap& params,
                           const PipelineConfig& model, const std::vector<int>& ks,
                           ConstraintMode mode) {
  std::vector<FrameEval> frames;
  for (const Video& video : videos) {
    Graph g;
    BoundParams bound = bind_params(g, params);
    VideoRun run = run_video(g, bound, video, model, nullptr);
    std::vector<FrameEval> fe = build_frame_evals(g, run, video, model, mode);
    frames.insert(frames.end(), std::make_move_iterator(fe.begin()),
                  std::make_move_iterator(fe.end()));
  }
  return evaluate_frames(frames, ks, model.num_predicates);
}

double dataset_loss(const Dataset& dataset, const TensorMap& params, const RunConfig& config) {
  const PipelineConfig model = apply_dataset_dims(config.model, dataset.meta);
  const RelLossConfig loss_cfg = resolve_loss(dataset, config, model.num_predicates);
  double total = 0.0;
  int counted = 0;
  for (const Video& video : dataset.train) {
    Graph g;
    BoundParams bound = bind_params(g, params);
    VideoRun run = run_video(g, bound, video, model, nullptr);
    if (run.relation_targets.empty()) {
      continue;
    }
    total += g.value(video_loss(g, run, model, loss_cfg)).data[0];
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

}  // namespace dsg

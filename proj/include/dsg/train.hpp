#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dsg/config.hpp"
#include "dsg/dataset.hpp"
#include "dsg/eval.hpp"
#include "dsg/optim.hpp"
#include "dsg/tensor.hpp"

namespace dsg {

// Snapshot of a training run: model parameters plus the optimizer state
// needed to continue exactly where it stopped.
struct Checkpoint {
  RunConfig config;
  int epochs_completed = 0;
  std::int64_t optimizer_step = 0;
  TensorMap params;
  TensorMap adam_m;
  TensorMap adam_v;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);  // ParseError / VersionError

// Copies the widths the data fixes (feature, union, class and predicate
// counts) from the dataset metadata onto the model config. The dataset is
// the source of truth for these, so run configs never repeat them.
PipelineConfig apply_dataset_dims(PipelineConfig model, const DatasetMeta& meta);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_grad_norm = 0.0;  // pre-clip global norm
  int videos = 0;
};

struct TrainResult {
  TensorMap params;
  std::vector<EpochStats> history;
};

// Trains for config.epochs epochs over dataset.train, one video per step.
// Every random stream is derived from (seed, epoch, video id), so the
// trajectory is a pure function of config + dataset: resuming from a
// checkpoint at any epoch boundary lands bit-identically on the same
// parameters as an uninterrupted run.
//  - checkpoint_path non-empty: state written there after every epoch.
//  - resume_from non-empty: continue from that checkpoint (its embedded
//    config must agree with `config` on the fields that shape parameters).
//  - log_path non-empty: one JSON line per epoch, deterministic fields only.
//  - progress non-null: a human-readable line per epoch as it completes.
TrainResult train_run(const Dataset& dataset, const RunConfig& config,
                      const std::string& checkpoint_path = "", const std::string& log_path = "",
                      const std::string& resume_from = "", std::ostream* progress = nullptr);

// Deterministic evaluation over a video list: forward every video with the
// noise-free selection path and pool all frames into one metric set.
EvalResult evaluate_videos(const std::vector<Video>& videos, const TensorMap& params,
                           const PipelineConfig& model, const std::vector<int>& ks,
                           ConstraintMode mode);

// Epoch-mean training loss, exposed for the ablation driver.
double dataset_loss(const Dataset& dataset, const TensorMap& params, const RunConfig& config);

}  // namespace dsg

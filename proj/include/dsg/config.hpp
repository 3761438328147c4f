#pragma once

#include <cstdint>
#include <string>

#include "dsg/dataset.hpp"
#include "dsg/loss.hpp"
#include "dsg/optim.hpp"
#include "dsg/pipeline.hpp"

namespace dsg {

// Everything a run needs, loadable from one JSON file. Every field has a
// default; unknown keys are rejected so typos fail instead of silently
// falling back.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string dataset;  // manifest path (gen writes it, train/eval read it)
  GeneratorConfig generator;
  PipelineConfig model;
  RelLossConfig loss;
  bool class_balance = true;  // derive omega from training counts
  double class_balance_beta = 0.9999;
  AdamWConfig optimizer;
  double clip_norm = 5.0;
  int epochs = 10;
};

RunConfig load_run_config(const std::string& path);

// Round-trip used to embed the config in checkpoints.
std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);

}  // namespace dsg

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dsg/config.hpp"
#include "dsg/dataset.hpp"
#include "dsg/dataset_io.hpp"
#include "dsg/errors.hpp"
#include "dsg/eval.hpp"
#include "dsg/gradcheck.hpp"
#include "dsg/pipeline.hpp"
#include "dsg/train.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Exit codes: 0 success, 1 check or run failure, 2 usage/config error.
int report_error(const std::exception& e) {
  const char* kind = "internal";
  int code = 1;
  if (dynamic_cast<const dsg::VersionError*>(&e) != nullptr) {
    kind = "version";
    code = 2;
  } else if (dynamic_cast<const dsg::ParseError*>(&e) != nullptr) {
    kind = "parse";
    code = 2;
  } else if (dynamic_cast<const dsg::ContractError*>(&e) != nullptr) {
    kind = "contract";
    code = 2;
  } else if (dynamic_cast<const dsg::ShapeError*>(&e) != nullptr) {
    kind = "shape";
  } else if (dynamic_cast<const dsg::NumericsError*>(&e) != nullptr) {
    kind = "numerics";
  } else if (dynamic_cast<const dsg::Error*>(&e) != nullptr) {
    kind = "runtime";
  }
  std::cerr << "error: " << kind << ": " << e.what() << std::endl;
  return code;
}

const char* mode_name(dsg::ConstraintMode m) {
  return m == dsg::ConstraintMode::kWith ? "with" : "no";
}

const char* task_name(dsg::TaskMode t) {
  return t == dsg::TaskMode::kSgCls ? "sgcls" : "predcls";
}

std::vector<dsg::ConstraintMode> modes_from(const std::string& mode) {
  if (mode == "with") return {dsg::ConstraintMode::kWith};
  if (mode == "no") return {dsg::ConstraintMode::kNo};
  return {dsg::ConstraintMode::kWith, dsg::ConstraintMode::kNo};
}

std::string num6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dsg::ContractError("cannot write " + path);
  out << text;
  if (!out) throw dsg::ContractError("write failed for " + path);
}

json metrics_json(const dsg::EvalResult& r) {
  json jm;
  for (const auto& [k, v] : r.recall) jm["recall"][std::to_string(k)] = v;
  for (const auto& [k, v] : r.mean_recall) jm["mean_recall"][std::to_string(k)] = v;
  for (const auto& [k, per] : r.class_recall) {
    for (const auto& [cls, v] : per) {
      jm["class_recall"][std::to_string(k)][std::to_string(cls)] = v;
    }
  }
  return jm;
}

// Metric reports land twice: a structured object file and flat tables, so
// downstream plotting needs nothing from this repo.
void write_metric_files(const std::string& dir,
                        const std::map<std::string, dsg::EvalResult>& by_mode) {
  json j;
  std::string csv = "mode,k,recall,mean_recall\n";
  std::string cls_csv = "mode,k,predicate,recall\n";
  for (const auto& [mode, r] : by_mode) {
    j[mode] = metrics_json(r);
    for (const auto& [k, v] : r.recall) {
      csv += mode + "," + std::to_string(k) + "," + num6(v) + "," + num6(r.mean_recall.at(k)) +
             "\n";
    }
    for (const auto& [k, per] : r.class_recall) {
      for (const auto& [cls, v] : per) {
        cls_csv +=
            mode + "," + std::to_string(k) + "," + std::to_string(cls) + "," + num6(v) + "\n";
      }
    }
  }
  write_text(dir + "/metrics.json", j.dump(1) + "\n");
  write_text(dir + "/metrics.csv", csv);
  write_text(dir + "/class_recall.csv", cls_csv);
}

void print_metrics(const std::map<std::string, dsg::EvalResult>& by_mode) {
  std::printf("%-6s %-5s %-10s %-10s\n", "mode", "K", "R@K", "mR@K");
  for (const auto& [mode, r] : by_mode) {
    for (const auto& [k, v] : r.recall) {
      std::printf("%-6s %-5d %-10.2f %-10.2f\n", mode.c_str(), k, v, r.mean_recall.at(k));
    }
  }
}

std::map<std::string, dsg::EvalResult> eval_modes(const std::vector<dsg::Video>& videos,
                                                  const dsg::TensorMap& params,
                                                  const dsg::PipelineConfig& model,
                                                  const std::vector<int>& ks,
                                                  const std::string& mode) {
  std::map<std::string, dsg::EvalResult> by_mode;
  for (dsg::ConstraintMode m : modes_from(mode)) {
    by_mode[mode_name(m)] = dsg::evaluate_videos(videos, params, model, ks, m);
  }
  return by_mode;
}

// ---- subcommand bodies ---------------------------------------------------

int cmd_gen(const std::string& config_path, bool seed_set, std::uint64_t seed) {
  dsg::RunConfig cfg = dsg::load_run_config(config_path);
  if (seed_set) cfg.generator.seed = seed;
  if (cfg.dataset.empty()) {
    throw dsg::ContractError("config '" + config_path + "' has no dataset path");
  }
  const fs::path parent = fs::path(cfg.dataset).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const dsg::Dataset ds = dsg::generate_dataset(cfg.generator);
  dsg::write_dataset(ds, cfg.dataset);
  std::cout << "wrote " << cfg.dataset << " (" << ds.train.size() << " train / " << ds.test.size()
            << " test videos, " << ds.meta.num_classes << " classes, " << ds.meta.num_predicates
            << " predicates)" << std::endl;
  return 0;
}

int cmd_train(const std::string& config_path, bool seed_set, std::uint64_t seed,
              const std::string& out_dir, const std::string& checkpoint,
              const std::string& resume, const std::string& mode, const std::vector<int>& ks) {
  dsg::RunConfig cfg = dsg::load_run_config(config_path);
  if (seed_set) cfg.seed = seed;
  if (cfg.dataset.empty()) {
    throw dsg::ContractError("config '" + config_path + "' has no dataset path");
  }
  const dsg::Dataset ds = dsg::read_dataset(cfg.dataset);
  fs::create_directories(out_dir);
  const std::string ckpt_path = checkpoint.empty() ? out_dir + "/checkpoint.bin" : checkpoint;

  const dsg::TrainResult tr =
      dsg::train_run(ds, cfg, ckpt_path, out_dir + "/train_log.jsonl", resume, &std::cout);
  std::cout << "checkpoint: " << ckpt_path << std::endl;

  if (ds.test.empty()) {
    std::cout << "dataset has no test split; skipping final evaluation" << std::endl;
    return 0;
  }
  const dsg::PipelineConfig model = dsg::apply_dataset_dims(cfg.model, ds.meta);
  const auto by_mode = eval_modes(ds.test, tr.params, model, ks, mode);
  write_metric_files(out_dir, by_mode);
  print_metrics(by_mode);
  std::cout << "metrics: " << out_dir << "/metrics.json" << std::endl;
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out_dir, const std::string& mode, const std::vector<int>& ks) {
  const dsg::RunConfig cfg = dsg::load_run_config(config_path);
  const dsg::Checkpoint ck = dsg::read_checkpoint(checkpoint);
  if (cfg.model.task != ck.config.model.task) {
    throw dsg::ContractError(std::string("task mismatch: checkpoint was trained for ") +
                             task_name(ck.config.model.task) + ", config requests " +
                             task_name(cfg.model.task));
  }
  const std::string dataset_path = cfg.dataset.empty() ? ck.config.dataset : cfg.dataset;
  if (dataset_path.empty()) {
    throw dsg::ContractError("neither config nor checkpoint names a dataset");
  }
  const dsg::Dataset ds = dsg::read_dataset(dataset_path);
  if (ds.test.empty()) {
    throw dsg::ContractError("dataset '" + dataset_path + "' has no test split");
  }
  const dsg::PipelineConfig model = dsg::apply_dataset_dims(ck.config.model, ds.meta);
  fs::create_directories(out_dir);
  const auto by_mode = eval_modes(ds.test, ck.params, model, ks, mode);
  write_metric_files(out_dir, by_mode);
  print_metrics(by_mode);
  std::cout << "metrics: " << out_dir << "/metrics.json" << std::endl;
  return 0;
}

int cmd_gradcheck() {
  const auto start = std::chrono::steady_clock::now();
  const dsg::GradCheckSuite suite = dsg::standard_suite();
  const bool ok = suite.run(std::cout);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s: %zu checks in %.1f s\n", ok ? "PASS" : "FAIL", suite.size(), seconds);
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& axis, bool seed_set,
               std::uint64_t seed, const std::string& out_dir, const std::string& mode,
               const std::vector<int>& ks) {
  dsg::RunConfig base = dsg::load_run_config(config_path);
  if (seed_set) base.seed = seed;
  if (base.dataset.empty()) {
    throw dsg::ContractError("config '" + config_path + "' has no dataset path");
  }
  const dsg::Dataset ds = dsg::read_dataset(base.dataset);
  if (ds.test.empty()) {
    throw dsg::ContractError("ablation needs a test split in '" + base.dataset + "'");
  }

  struct Row {
    std::string label;
    dsg::RunConfig cfg;
  };
  std::vector<Row> rows;
  if (axis == "module") {
    // Denoising stacks and the reweighted loss, each on/off.
    auto variant = [&](bool denoise, bool ar, const std::string& label) {
      dsg::RunConfig c = base;
      c.model.denoise = denoise;
      c.loss.kind = ar ? dsg::RelLossKind::kAr : dsg::RelLossKind::kBce;
      c.class_balance = ar;
      rows.push_back({label, std::move(c)});
    };
    variant(false, false, "neither");
    variant(true, false, "denoise");
    variant(false, true, "ar_loss");
    variant(true, true, "both");
  } else if (axis == "topk") {
    for (int k : {2, 4, 6, 8, 10}) {
      dsg::RunConfig c = base;
      c.model.context_k = k;
      rows.push_back({"k=" + std::to_string(k), std::move(c)});
    }
  } else if (axis == "loss") {
    auto variant = [&](dsg::RelLossKind kind, bool balance, const std::string& label) {
      dsg::RunConfig c = base;
      c.loss.kind = kind;
      c.class_balance = balance;
      rows.push_back({label, std::move(c)});
    };
    variant(dsg::RelLossKind::kBce, false, "bce");
    variant(dsg::RelLossKind::kFocal, false, "focal");
    variant(dsg::RelLossKind::kMlm, false, "mlm");
    variant(dsg::RelLossKind::kAr, false, "ar_unweighted");
    variant(dsg::RelLossKind::kAr, true, "ar");
  } else {
    throw dsg::ContractError("unknown ablation axis '" + axis + "' (expected module|topk|loss)");
  }

  fs::create_directories(out_dir);
  const dsg::ConstraintMode cmode = modes_from(mode).front();
  json j;
  std::string csv = "label,k,recall,mean_recall\n";

  std::printf("%-15s", "label");
  for (int k : ks) std::printf(" %-9s %-9s", ("R@" + std::to_string(k)).c_str(),
                               ("mR@" + std::to_string(k)).c_str());
  std::printf(" %-8s\n", "seconds");

  for (const Row& row : rows) {
    const auto start = std::chrono::steady_clock::now();
    const dsg::TrainResult tr = dsg::train_run(ds, row.cfg);
    const dsg::PipelineConfig model = dsg::apply_dataset_dims(row.cfg.model, ds.meta);
    const dsg::EvalResult r = dsg::evaluate_videos(ds.test, tr.params, model, ks, cmode);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    j[row.label] = metrics_json(r);
    std::printf("%-15s", row.label.c_str());
    for (int k : ks) {
      csv += row.label + "," + std::to_string(k) + "," + num6(r.recall.at(k)) + "," +
             num6(r.mean_recall.at(k)) + "\n";
      std::printf(" %-9.2f %-9.2f", r.recall.at(k), r.mean_recall.at(k));
    }
    std::printf(" %-8.1f\n", seconds);
    std::fflush(stdout);
  }
  write_text(out_dir + "/ablate.json", j.dump(1) + "\n");
  write_text(out_dir + "/ablate.csv", csv);
  std::cout << "table: " << out_dir << "/ablate.json" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic scene-graph pipeline: data generation, training, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", checkpoint, resume, mode = "both", axis;
  std::uint64_t seed = 0;
  std::vector<int> ks = {10, 20, 50};

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset at the configured path");
  gen->add_option("--config", config_path, "run config (JSON)")->required();
  CLI::Option* gen_seed = gen->add_option("--seed", seed, "override the generator seed");

  CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  train->add_option("--config", config_path, "run config (JSON)")->required();
  CLI::Option* train_seed = train->add_option("--seed", seed, "override the training seed");
  train->add_option("--out", out_dir, "output directory (default: .)");
  train->add_option("--checkpoint", checkpoint, "checkpoint path (default: <out>/checkpoint.bin)");
  train->add_option("--resume", resume, "resume from this checkpoint");
  train->add_option("--mode", mode, "evaluation constraint mode")
      ->check(CLI::IsMember({"with", "no", "both"}));
  train->add_option("--k", ks, "recall cutoffs (comma separated)")->delimiter(',');

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval->add_option("--config", config_path, "run config (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--out", out_dir, "output directory (default: .)");
  eval->add_option("--mode", mode, "evaluation constraint mode")
      ->check(CLI::IsMember({"with", "no", "both"}));
  eval->add_option("--k", ks, "recall cutoffs (comma separated)")->delimiter(',');

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare variants along one axis");
  ablate->add_option("--config", config_path, "run config (JSON)")->required();
  ablate->add_option("--axis", axis, "module | topk | loss")->required();
  CLI::Option* ablate_seed = ablate->add_option("--seed", seed, "override the training seed");
  ablate->add_option("--out", out_dir, "output directory (default: .)");
  ablate->add_option("--mode", mode, "constraint mode for the table (default: with)");
  ablate->add_option("--k", ks, "recall cutoffs (comma separated)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(config_path, gen_seed->count() > 0, seed);
    }
    if (train->parsed()) {
      return cmd_train(config_path, train_seed->count() > 0, seed, out_dir, checkpoint, resume,
                       mode, ks);
    }
    if (eval->parsed()) {
      return cmd_eval(config_path, checkpoint, out_dir, mode, ks);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck();
    }
    if (ablate->parsed()) {
      if (mode == "both") mode = "with";  // the comparison table is one mode wide
      return cmd_ablate(config_path, axis, ablate_seed->count() > 0, seed, out_dir, mode, ks);
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return 0;
}

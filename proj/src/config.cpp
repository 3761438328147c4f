#include "dsg/config.hpp"

#include <exception>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dsg/errors.hpp"

namespace dsg {

namespace {

using nlohmann::json;

[[noreturn]] void cfg_error(const std::string& where, const std::string& what) {
  throw ParseError("config field '" + where + "': " + what);
}

// Applies known keys through `apply`, then rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string name)
      : j_(j), name_(std::move(name)), exceptions_at_entry_(std::uncaught_exceptions()) {
    if (!j.is_object()) cfg_error(name_, "expected an object");
  }

  // Rejects unknown keys on scope exit — but never while another error is
  // already unwinding past us.
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > exceptions_at_entry_) return;
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) cfg_error(name_ + "." + key, "unknown key");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      cfg_error(name_ + "." + key, "wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

 private:
  const json& j_;
  std::string name_;
  int exceptions_at_entry_;
  std::set<std::string> seen_;
};

void parse_generator(const json& j, GeneratorConfig& g) {
  Section s(j, "generator");
  s.get("num_videos", g.num_videos);
  s.get("test_fraction", g.test_fraction);
  s.get("frames_per_video", g.frames_per_video);
  s.get("min_objects", g.min_objects);
  s.get("max_objects", g.max_objects);
  s.get("num_classes", g.num_classes);
  s.get("num_predicates", g.num_predicates);
  s.get("feature_dim", g.feature_dim);
  s.get("union_dim", g.union_dim);
  s.get("zipf_alpha", g.zipf_alpha);
  s.get("positive_rate", g.positive_rate);
  s.get("multi_predicate_rate", g.multi_predicate_rate);
  s.get("jitter_std", g.jitter_std);
  s.get("noise_rate", g.noise_rate);
  s.get("noise_scale", g.noise_scale);
  s.get("seed", g.seed);
}

void parse_model(const json& j, PipelineConfig& m) {
  Section s(j, "model");
  s.get("feature_dim", m.feature_dim);
  s.get("union_dim", m.union_dim);
  s.get("embed_dim", m.embed_dim);
  s.get("heads", m.heads);
  s.get("temporal_layers", m.temporal_layers);
  s.get("spatial_layers", m.spatial_layers);
  s.get("relation_layers", m.relation_layers);
  s.get("relation_heads", m.relation_heads);
  s.get("context_k", m.context_k);
  s.get("tau", m.tau);
  s.get("link_threshold", m.link_threshold);
  s.get("denoise", m.denoise);
  s.get("use_precomputed_union", m.use_precomputed_union);
  s.get("straight_through", m.straight_through);
  std::string task = m.task == TaskMode::kSgCls ? "sgcls" : "predcls";
  s.get("task", task);
  if (task == "predcls") {
    m.task = TaskMode::kPredCls;
  } else if (task == "sgcls") {
    m.task = TaskMode::kSgCls;
  } else {
    cfg_error("model.task", "expected \"predcls\" or \"sgcls\", got \"" + task + "\"");
  }
}

void parse_loss(const json& j, RelLossConfig& l) {
  Section s(j, "loss");
  std::string kind;
  switch (l.kind) {
    case RelLossKind::kBce: kind = "bce"; break;
    case RelLossKind::kFocal: kind = "focal"; break;
    case RelLossKind::kMlm: kind = "mlm"; break;
    case RelLossKind::kAr: kind = "ar"; break;
  }
  s.get("kind", kind);
  if (kind == "bce") {
    l.kind = RelLossKind::kBce;
  } else if (kind == "focal") {
    l.kind = RelLossKind::kFocal;
  } else if (kind == "mlm") {
    l.kind = RelLossKind::kMlm;
  } else if (kind == "ar") {
    l.kind = RelLossKind::kAr;
  } else {
    cfg_error("loss.kind", "expected bce|focal|mlm|ar, got \"" + kind + "\"");
  }
  s.get("gamma_pos", l.gamma_pos);
  s.get("gamma_neg", l.gamma_neg);
  s.get("focal_gamma", l.focal_gamma);
  s.get("margin", l.margin);
}

void parse_optimizer(const json& j, AdamWConfig& o) {
  Section s(j, "optimizer");
  s.get("lr", o.lr);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("eps", o.eps);
  s.get("weight_decay", o.weight_decay);
}

RunConfig parse_root(const json& j) {
  RunConfig cfg;
  Section s(j, "config");
  s.get("seed", cfg.seed);
  s.get("dataset", cfg.dataset);
  s.get("class_balance", cfg.class_balance);
  s.get("class_balance_beta", cfg.class_balance_beta);
  s.get("clip_norm", cfg.clip_norm);
  s.get("epochs", cfg.epochs);
  if (const json* sub = s.sub("generator")) parse_generator(*sub, cfg.generator);
  if (const json* sub = s.sub("model")) parse_model(*sub, cfg.model);
  if (const json* sub = s.sub("loss")) parse_loss(*sub, cfg.loss);
  if (const json* sub = s.sub("optimizer")) parse_optimizer(*sub, cfg.optimizer);
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return parse_root(j);
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("embedded config: ") + e.what());
  }
  return parse_root(j);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["dataset"] = cfg.dataset;
  j["class_balance"] = cfg.class_balance;
  j["class_balance_beta"] = cfg.class_balance_beta;
  j["clip_norm"] = cfg.clip_norm;
  j["epochs"] = cfg.epochs;
  json g;
  g["num_videos"] = cfg.generator.num_videos;
  g["test_fraction"] = cfg.generator.test_fraction;
  g["frames_per_video"] = cfg.generator.frames_per_video;
  g["min_objects"] = cfg.generator.min_objects;
  g["max_objects"] = cfg.generator.max_objects;
  g["num_classes"] = cfg.generator.num_classes;
  g["num_predicates"] = cfg.generator.num_predicates;
  g["feature_dim"] = cfg.generator.feature_dim;
  g["union_dim"] = cfg.generator.union_dim;
  g["zipf_alpha"] = cfg.generator.zipf_alpha;
  g["positive_rate"] = cfg.generator.positive_rate;
  g["multi_predicate_rate"] = cfg.generator.multi_predicate_rate;
  g["jitter_std"] = cfg.generator.jitter_std;
  g["noise_rate"] = cfg.generator.noise_rate;
  g["noise_scale"] = cfg.generator.noise_scale;
  g["seed"] = cfg.generator.seed;
  j["generator"] = std::move(g);
  json m;
  m["feature_dim"] = cfg.model.feature_dim;
  m["union_dim"] = cfg.model.union_dim;
  m["embed_dim"] = cfg.model.embed_dim;
  m["heads"] = cfg.model.heads;
  m["temporal_layers"] = cfg.model.temporal_layers;
  m["spatial_layers"] = cfg.model.spatial_layers;
  m["relation_layers"] = cfg.model.relation_layers;
  m["relation_heads"] = cfg.model.relation_heads;
  m["context_k"] = cfg.model.context_k;
  m["tau"] = cfg.model.tau;
  m["link_threshold"] = cfg.model.link_threshold;
  m["denoise"] = cfg.model.denoise;
  m["use_precomputed_union"] = cfg.model.use_precomputed_union;
  m["straight_through"] = cfg.model.straight_through;
  m["task"] = cfg.model.task == TaskMode::kSgCls ? "sgcls" : "predcls";
  j["model"] = std::move(m);
  json l;
  switch (cfg.loss.kind) {
    case RelLossKind::kBce: l["kind"] = "bce"; break;
    case RelLossKind::kFocal: l["kind"] = "focal"; break;
    case RelLossKind::kMlm: l["kind"] = "mlm"; break;
    case RelLossKind::kAr: l["kind"] = "ar"; break;
  }
  l["gamma_pos"] = cfg.loss.gamma_pos;
  l["gamma_neg"] = cfg.loss.gamma_neg;
  l["focal_gamma"] = cfg.loss.focal_gamma;
  l["margin"] = cfg.loss.margin;
  j["loss"] = std::move(l);
  json o;
  o["lr"] = cfg.optimizer.lr;
  o["beta1"] = cfg.optimizer.beta1;
  o["beta2"] = cfg.optimizer.beta2;
  o["eps"] = cfg.optimizer.eps;
  o["weight_decay"] = cfg.optimizer.weight_decay;
  j["optimizer"] = std::move(o);
  return j.dump(1);
}

}  // namespace dsg

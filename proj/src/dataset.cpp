#include "dsg/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "dsg/errors.hpp"

namespace dsg {

namespace {

// Stream tags for derive_seed, so every consumer of the base seed draws
// from an independent stream.
constexpr std::uint64_t kTagPrototypes = 0xA1;
constexpr std::uint64_t kTagVideo = 0xB2;

// All stored values are float32-representable so the binary format
// round-trips without loss.
double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (double& x : v) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

struct Prototypes {
  std::vector<std::vector<double>> object_class;   // C unit vectors in R^D
  std::vector<std::vector<double>> predicate;      // P vectors in R^Du
  std::vector<std::vector<double>> subject_bump;   // P small vectors in R^D
  std::vector<std::vector<double>> object_bump;    // P small vectors in R^D
};

Prototypes make_prototypes(const GeneratorConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {kTagPrototypes}));
  Prototypes p;
  for (int c = 0; c < cfg.num_classes; ++c) {
    p.object_class.push_back(random_unit(rng, cfg.feature_dim));
  }
  for (int k = 0; k < cfg.num_predicates; ++k) {
    auto u = random_unit(rng, cfg.union_dim);
    for (double& v : u) v *= 2.0;
    p.predicate.push_back(std::move(u));
  }
  for (int k = 0; k < cfg.num_predicates; ++k) {
    auto s = random_unit(rng, cfg.feature_dim);
    auto o = random_unit(rng, cfg.feature_dim);
    for (double& v : s) v *= 0.3;
    for (double& v : o) v *= 0.3;
    p.subject_bump.push_back(std::move(s));
    p.object_bump.push_back(std::move(o));
  }
  return p;
}

void validate(const GeneratorConfig& cfg) {
  if (cfg.num_videos < 1 || cfg.frames_per_video < 1) {
    throw ContractError("generator: need at least one video and one frame");
  }
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    throw ContractError("generator: object count range is empty");
  }
  if (cfg.num_classes < 1 || cfg.num_predicates < 1 || cfg.feature_dim < 1 ||
      cfg.union_dim < 1) {
    throw ContractError("generator: dimensions must be positive");
  }
  if (cfg.test_fraction < 0.0 || cfg.positive_rate < 0.0 || cfg.positive_rate > 1.0 ||
      cfg.multi_predicate_rate < 0.0 || cfg.multi_predicate_rate > 1.0 ||
      cfg.noise_rate < 0.0 || cfg.noise_rate > 1.0) {
    throw ContractError("generator: rates must be valid probabilities");
  }
}

Video make_video(std::uint64_t id, const GeneratorConfig& cfg, const Prototypes& proto,
                 const ZipfSampler& zipf) {
  Rng rng(derive_seed(cfg.seed, {kTagVideo, id}));
  Video video;
  video.id = id;

  const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<int> classes(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> identity(static_cast<std::size_t>(n));
  std::vector<double> cx(static_cast<std::size_t>(n)), cy(static_cast<std::size_t>(n));
  std::vector<double> bw(static_cast<std::size_t>(n)), bh(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    classes[static_cast<std::size_t>(i)] = rng.uniform_int(0, cfg.num_classes - 1);
    // Instance-level appearance offset: separates same-class objects and
    // gives each tracklet a recognizable signature.
    identity[static_cast<std::size_t>(i)] = random_unit(rng, cfg.feature_dim);
    cx[static_cast<std::size_t>(i)] = rng.uniform(0.15, 0.85);
    cy[static_cast<std::size_t>(i)] = rng.uniform(0.15, 0.85);
    bw[static_cast<std::size_t>(i)] = rng.uniform(0.1, 0.3);
    bh[static_cast<std::size_t>(i)] = rng.uniform(0.1, 0.3);
  }

  // Persistent scene: the relation set holds for the whole video.
  const auto pairs = ordered_pairs(n);
  std::vector<RelationAnnotation> relations;
  for (const auto& [s, o] : pairs) {
    if (rng.uniform01() < cfg.positive_rate) {
      const int p1 = zipf.sample(rng);
      relations.push_back({s, o, p1});
      if (rng.uniform01() < cfg.multi_predicate_rate && cfg.num_predicates > 1) {
        int p2 = zipf.sample(rng);
        for (int tries = 0; p2 == p1 && tries < 8; ++tries) p2 = zipf.sample(rng);
        if (p2 != p1) relations.push_back({s, o, p2});
      }
    }
  }

  for (int t = 0; t < cfg.frames_per_video; ++t) {
    Frame frame;
    frame.corrupted = rng.uniform01() < cfg.noise_rate;
    for (int i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      if (t > 0) {
        // Slow drift keeps adjacent-frame overlap high, which is what lets
        // the box term carry the matching through corrupted appearance.
        cx[si] = std::clamp(cx[si] + 0.02 * rng.gaussian(), bw[si] / 2, 1.0 - bw[si] / 2);
        cy[si] = std::clamp(cy[si] + 0.02 * rng.gaussian(), bh[si] / 2, 1.0 - bh[si] / 2);
      }
      FrameObject obj;
      obj.box = {quantize(cx[si] - bw[si] / 2), quantize(cy[si] - bh[si] / 2),
                 quantize(cx[si] + bw[si] / 2), quantize(cy[si] + bh[si] / 2)};
      obj.gt_class = classes[si];
      obj.gt_track = i;

      std::vector<double> feat = proto.object_class[static_cast<std::size_t>(classes[si])];
      for (int d = 0; d < cfg.feature_dim; ++d) feat[d] += 0.25 * identity[si][d];
      for (const RelationAnnotation& r : relations) {
        const auto& bump = r.subject == i   ? proto.subject_bump[static_cast<std::size_t>(r.predicate)]
                           : r.object == i ? proto.object_bump[static_cast<std::size_t>(r.predicate)]
                                           : std::vector<double>();
        if (!bump.empty()) {
          for (int d = 0; d < cfg.feature_dim; ++d) feat[d] += bump[d];
        }
      }
      for (int d = 0; d < cfg.feature_dim; ++d) feat[d] += cfg.jitter_std * rng.gaussian();
      if (frame.corrupted) {
        const auto dir = random_unit(rng, cfg.feature_dim);
        for (int d = 0; d < cfg.feature_dim; ++d) feat[d] += cfg.noise_scale * dir[d];
      }
      for (double& v : feat) v = quantize(v);
      obj.appearance = std::move(feat);

      const double score_noise = frame.corrupted ? 2.0 : 0.3;
      obj.class_scores.resize(static_cast<std::size_t>(cfg.num_classes));
      for (int c = 0; c < cfg.num_classes; ++c) {
        obj.class_scores[static_cast<std::size_t>(c)] =
            quantize((c == classes[si] ? 2.5 : 0.0) + score_noise * rng.gaussian());
      }
      frame.objects.push_back(std::move(obj));
    }

    frame.relations = relations;
    frame.union_features.resize(pairs.size());
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      std::vector<double> u(static_cast<std::size_t>(cfg.union_dim), 0.0);
      for (const RelationAnnotation& r : relations) {
        if (r.subject == pairs[q].first && r.object == pairs[q].second) {
          for (int d = 0; d < cfg.union_dim; ++d) {
            u[static_cast<std::size_t>(d)] += proto.predicate[static_cast<std::size_t>(r.predicate)]
                                                  [static_cast<std::size_t>(d)];
          }
        }
      }
      for (double& v : u) v = quantize(v + cfg.jitter_std * rng.gaussian());
      frame.union_features[q] = std::move(u);
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

}  // namespace

std::vector<std::pair<int, int>> ordered_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n > 0 ? static_cast<std::size_t>(n - 1) : 0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

ZipfSampler::ZipfSampler(int n, double alpha) {
  if (n < 1) throw ContractError("zipf: need at least one category");
  if (alpha < 0.0) throw ContractError("zipf: alpha must be >= 0");
  prob_.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    prob_[static_cast<std::size_t>(k)] = std::pow(static_cast<double>(k + 1), -alpha);
    total += prob_[static_cast<std::size_t>(k)];
  }
  cdf_.resize(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    prob_[static_cast<std::size_t>(k)] /= total;
    acc += prob_[static_cast<std::size_t>(k)];
    cdf_[static_cast<std::size_t>(k)] = acc;
  }
  cdf_.back() = 1.0;
}

double ZipfSampler::probability(int k) const {
  if (k < 0 || k >= size()) throw ContractError("zipf: category out of range");
  return prob_[static_cast<std::size_t>(k)];
}

int ZipfSampler::sample(Rng& rng) const {
  const double u = rng.uniform01();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(std::min<std::size_t>(
      static_cast<std::size_t>(it - cdf_.begin()), prob_.size() - 1));
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
  validate(cfg);
  const Prototypes proto = make_prototypes(cfg);
  const ZipfSampler zipf(cfg.num_predicates, cfg.zipf_alpha);

  Dataset ds;
  ds.meta = {cfg.num_classes, cfg.num_predicates, cfg.feature_dim, cfg.union_dim,
             cfg.seed,        cfg.zipf_alpha,     cfg.noise_rate};
  const int num_test = static_cast<int>(std::lround(cfg.num_videos * cfg.test_fraction));
  for (int v = 0; v < cfg.num_videos; ++v) {
    ds.train.push_back(make_video(static_cast<std::uint64_t>(v), cfg, proto, zipf));
  }
  for (int v = 0; v < num_test; ++v) {
    ds.test.push_back(
        make_video(static_cast<std::uint64_t>(cfg.num_videos + v), cfg, proto, zipf));
  }
  return ds;
}

std::vector<long long> predicate_counts(const std::vector<Video>& videos, int num_predicates) {
  std::vector<long long> counts(static_cast<std::size_t>(num_predicates), 0);
  for (const Video& v : videos) {
    for (const Frame& f : v.frames) {
      for (const RelationAnnotation& r : f.relations) {
        if (r.predicate < 0 || r.predicate >= num_predicates) {
          throw ContractError("relation predicate " + std::to_string(r.predicate) +
                              " outside [0, " + std::to_string(num_predicates) + ")");
        }
        ++counts[static_cast<std::size_t>(r.predicate)];
      }
    }
  }
  return counts;
}

}  // namespace dsg

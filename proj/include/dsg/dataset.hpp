#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dsg/geometry.hpp"
#include "dsg/rng.hpp"

namespace dsg {

// One detected object within one frame, as a detector would hand it over:
// a box, an appearance vector, and noisy per-class scores.
struct FrameObject {
  Box box;
  std::vector<double> appearance;
  std::vector<double> class_scores;
  int gt_class = -1;
  int gt_track = -1;
};

// Annotated relation between two object slots of the same frame.
struct RelationAnnotation {
  int subject = 0;
  int object = 0;
  int predicate = 0;
};

struct Frame {
  std::vector<FrameObject> objects;
  std::vector<RelationAnnotation> relations;
  // Union feature per ordered object pair, indexed like ordered_pairs(n).
  std::vector<std::vector<double>> union_features;
  bool corrupted = false;
};

struct Video {
  std::uint64_t id = 0;
  std::vector<Frame> frames;
};

struct DatasetMeta {
  int num_classes = 0;
  int num_predicates = 0;
  int feature_dim = 0;
  int union_dim = 0;
  std::uint64_t seed = 0;
  double zipf_alpha = 0.0;
  double noise_rate = 0.0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Video> train;
  std::vector<Video> test;
};

// Ordered pairs (i, j), i != j, subject-major: (0,1) (0,2) ... (1,0) (1,2) ...
// Every per-pair structure in the codebase follows this enumeration.
std::vector<std::pair<int, int>> ordered_pairs(int n);

// Zipf distribution over {0, ..., n-1}: P(k) proportional to (k+1)^-alpha.
class ZipfSampler {
 public:
  ZipfSampler(int n, double alpha);
  double probability(int k) const;
  int sample(Rng& rng) const;  // inverse CDF on one uniform draw
  int size() const { return static_cast<int>(prob_.size()); }

 private:
  std::vector<double> prob_;
  std::vector<double> cdf_;
};

struct GeneratorConfig {
  int num_videos = 200;        // training split size
  double test_fraction = 0.2;  // held-out videos, as a fraction of num_videos
  int frames_per_video = 8;
  int min_objects = 2;
  int max_objects = 3;
  int num_classes = 6;
  int num_predicates = 20;
  int feature_dim = 24;
  int union_dim = 24;
  double zipf_alpha = 1.2;      // predicate long tail
  double positive_rate = 0.35;  // chance an ordered pair is related
  double multi_predicate_rate = 0.1;  // chance a related pair gets a second predicate
  double jitter_std = 0.05;     // per-frame feature jitter
  double noise_rate = 0.0;      // fraction of frames corrupted
  double noise_scale = 2.0;     // corruption magnitude on appearance
  std::uint64_t seed = 1;
};

// Deterministic synthetic videos: per video a fixed cast of objects (class
// prototypes plus jitter), smoothly drifting boxes, persistent relations
// whose predicates follow the Zipf tail, and union features built from
// per-predicate prototypes. Corrupted frames get large appearance noise and
// unreliable class scores; boxes and union features stay clean. Every
// stored real value is quantized to float32 precision so the binary format
// round-trips exactly. Each video consumes its own derived random stream,
// so the split sizes can change without disturbing other videos.
Dataset generate_dataset(const GeneratorConfig& config);

// Positive (frame, pair, predicate) occurrences per predicate, the counts
// behind the effective-number class weights.
std::vector<long long> predicate_counts(const std::vector<Video>& videos, int num_predicates);

}  // namespace dsg

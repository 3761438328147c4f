#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dsg/geometry.hpp"

namespace dsg {

// One detected object in one frame: appearance features, a box, and class
// scores. Ground-truth fields travel with the proposal for supervision and
// diagnostics; they play no part in matching itself.
struct ObjectProposal {
  Box box;
  std::vector<double> appearance;
  std::vector<double> class_scores;
  int gt_class = -1;
  int gt_track = -1;
};

// Zero-norm inputs define similarity 0 rather than dividing by zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Link affinity between detections in adjacent frames: appearance cosine
// plus box overlap, so the score lives in [-1, 2].
double match_score(const ObjectProposal& a, const ObjectProposal& b);

// Identity chain through the video as (frame, object index) pairs in frame
// order. Every detection belongs to exactly one tracklet; a detection that
// never links still forms a singleton.
struct Tracklet {
  std::vector<std::pair<int, int>> members;
};

// Greedy one-to-one linking between each adjacent frame pair: candidate
// pairs sorted by descending score with lexicographic (prev, next) index
// tie-breaks, accepted while both endpoints are free and the score clears
// `threshold`.
std::vector<Tracklet> link_objects(const std::vector<std::vector<ObjectProposal>>& frames,
                                   double threshold = 0.5);

// Per-frame, per-object tracklet index (inverse of Tracklet::members).
std::vector<std::vector<int>> tracklet_index(const std::vector<Tracklet>& tracklets,
                                             const std::vector<int>& frame_sizes);

// Temporal neighborhood of one detection: the other members of its tracklet
// (self excluded), in frame order. Singleton tracklets give empty lists.
struct Neighborhood {
  std::vector<std::pair<int, int>> members;
};

std::vector<std::vector<Neighborhood>> build_neighborhoods(
    const std::vector<Tracklet>& tracklets, const std::vector<int>& frame_sizes);

}  // namespace dsg

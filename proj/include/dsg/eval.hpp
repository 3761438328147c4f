#pragma once

#include <map>
#include <utility>
#include <vector>

#include "dsg/tensor.hpp"

namespace dsg {

// Relation score: subject confidence * predicate probability * object
// confidence. Classification tasks that fix the classes feed 1.0 for the
// endpoint confidences.
double triplet_score(double s_sub, double s_p, double s_obj);

struct TripletPrediction {
  int subject = 0;  // object slot in the frame
  int object = 0;
  int predicate = 0;
  double score = 0.0;
  // Whether the predicted endpoint classes match the ground truth. A
  // mismatched prediction still occupies rank positions but never hits.
  bool class_ok = true;
};

struct GroundTruthTriplet {
  int subject = 0;
  int object = 0;
  int predicate = 0;
};

enum class ConstraintMode { kWith, kNo };

// Candidate triplets for one frame, ranked by (score desc, subject, object,
// predicate). kWith keeps only the best predicate per ordered pair; kNo
// keeps every (pair, predicate) candidate up to `cap` after ranking.
// class_ok may be empty (treated as all-true) or hold one flag per pair.
std::vector<TripletPrediction> rank_predictions(const Tensor& predicate_probs,
                                                const std::vector<std::pair<int, int>>& pairs,
                                                const std::vector<double>& subject_scores,
                                                const std::vector<double>& object_scores,
                                                const std::vector<char>& class_ok,
                                                ConstraintMode mode, int cap = 100);

struct FrameEval {
  std::vector<TripletPrediction> ranked;
  std::vector<GroundTruthTriplet> gt;
};

struct EvalResult {
  std::map<int, double> recall;       // K -> image-averaged recall, in percent
  std::map<int, double> mean_recall;  // K -> predicate-class-averaged recall, in percent
  // K -> (predicate -> frame-averaged recall, in percent), holding exactly
  // the predicates that occur in the ground truth. mean_recall is the
  // unweighted average of each inner map.
  std::map<int, std::map<int, double>> class_recall;
};

// Image-level recall: frames without ground truth are skipped; each scored
// frame contributes |top-K hits| / |gt|. The class-averaged variant
// restricts both sides to one predicate class at a time, averages over the
// frames where that class occurs, then averages over the classes seen
// anywhere in the ground truth.
EvalResult evaluate_frames(const std::vector<FrameEval>& frames, const std::vector<int>& ks,
                           int num_predicates);

}  // namespace dsg

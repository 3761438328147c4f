#include "dsg/eval.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "dsg/errors.hpp"

namespace dsg {

double triplet_score(double s_sub, double s_p, double s_obj) { return s_sub * s_p * s_obj; }

namespace {

bool rank_before(const TripletPrediction& a, const TripletPrediction& b) {
  return std::tie(b.score, a.subject, a.object, a.predicate) <
         std::tie(a.score, b.subject, b.object, b.predicate);
}

}  // namespace

std::vector<TripletPrediction> rank_predictions(const Tensor& predicate_probs,
                                                const std::vector<std::pair<int, int>>& pairs,
                                                const std::vector<double>& subject_scores,
                                                const std::vector<double>& object_scores,
                                                const std::vector<char>& class_ok,
                                                ConstraintMode mode, int cap) {
  const int n = static_cast<int>(pairs.size());
  if (predicate_probs.rows() != n || subject_scores.size() != pairs.size() ||
      object_scores.size() != pairs.size() ||
      (!class_ok.empty() && class_ok.size() != pairs.size())) {
    throw ShapeError("rank_predictions: inputs disagree on the pair count");
  }
  const int p_dim = predicate_probs.cols();
  std::vector<TripletPrediction> out;
  for (int i = 0; i < n; ++i) {
    const bool ok = class_ok.empty() || class_ok[static_cast<std::size_t>(i)] != 0;
    if (mode == ConstraintMode::kWith) {
      int best = 0;
      for (int p = 1; p < p_dim; ++p) {
        if (predicate_probs.at(i, p) > predicate_probs.at(i, best)) best = p;
      }
      out.push_back({pairs[static_cast<std::size_t>(i)].first,
                     pairs[static_cast<std::size_t>(i)].second, best,
                     triplet_score(subject_scores[static_cast<std::size_t>(i)],
                                   predicate_probs.at(i, best),
                                   object_scores[static_cast<std::size_t>(i)]),
                     ok});
    } else {
      for (int p = 0; p < p_dim; ++p) {
        out.push_back({pairs[static_cast<std::size_t>(i)].first,
                       pairs[static_cast<std::size_t>(i)].second, p,
                       triplet_score(subject_scores[static_cast<std::size_t>(i)],
                                     predicate_probs.at(i, p),
                                     object_scores[static_cast<std::size_t>(i)]),
                       ok});
      }
    }
  }
  std::sort(out.begin(), out.end(), rank_before);
  if (mode == ConstraintMode::kNo && static_cast<int>(out.size()) > cap) {
    out.resize(static_cast<std::size_t>(cap));
  }
  return out;
}

EvalResult evaluate_frames(const std::vector<FrameEval>& frames, const std::vector<int>& ks,
                           int num_predicates) {
  if (ks.empty()) throw ContractError("evaluate_frames: no K values given");
  for (int k : ks) {
    if (k <= 0) throw ContractError("evaluate_frames: K must be positive");
  }
  EvalResult result;
  for (int k : ks) {
    double recall_sum = 0.0;
    int scored_frames = 0;
    // Per predicate class: sum of per-frame recalls and frame counts.
    std::vector<double> class_sum(static_cast<std::size_t>(num_predicates), 0.0);
    std::vector<int> class_frames(static_cast<std::size_t>(num_predicates), 0);

    for (const FrameEval& f : frames) {
      if (f.gt.empty()) continue;
      ++scored_frames;
      std::set<std::tuple<int, int, int>> gt_all;
      for (const GroundTruthTriplet& t : f.gt) {
        if (t.predicate < 0 || t.predicate >= num_predicates) {
          throw ContractError("ground-truth predicate " + std::to_string(t.predicate) +
                              " outside [0, " + std::to_string(num_predicates) + ")");
        }
        gt_all.insert({t.subject, t.object, t.predicate});
      }
      std::set<std::tuple<int, int, int>> hit;
      const std::size_t top = std::min(f.ranked.size(), static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < top; ++i) {
        const TripletPrediction& p = f.ranked[i];
        if (!p.class_ok) continue;
        const auto key = std::make_tuple(p.subject, p.object, p.predicate);
        if (gt_all.count(key)) hit.insert(key);
      }
      recall_sum += static_cast<double>(hit.size()) / static_cast<double>(gt_all.size());

      // Class-restricted recall for every class present in this frame.
      std::map<int, int> gt_per_class;
      for (const auto& t : gt_all) gt_per_class[std::get<2>(t)]++;
      std::map<int, int> hit_per_class;
      for (const auto& t : hit) hit_per_class[std::get<2>(t)]++;
      for (const auto& [cls, count] : gt_per_class) {
        class_sum[static_cast<std::size_t>(cls)] +=
            static_cast<double>(hit_per_class.count(cls) ? hit_per_class[cls] : 0) /
            static_cast<double>(count);
        class_frames[static_cast<std::size_t>(cls)]++;
      }
    }

    result.recall[k] =
        scored_frames == 0 ? 0.0 : 100.0 * recall_sum / static_cast<double>(scored_frames);
    double class_avg = 0.0;
    int classes_seen = 0;
    for (int c = 0; c < num_predicates; ++c) {
      if (class_frames[static_cast<std::size_t>(c)] > 0) {
        const double cls_recall = class_sum[static_cast<std::size_t>(c)] /
                                  static_cast<double>(class_frames[static_cast<std::size_t>(c)]);
        result.class_recall[k][c] = 100.0 * cls_recall;
        class_avg += cls_recall;
        ++classes_seen;
      }
    }
    result.mean_recall[k] =
        classes_seen == 0 ? 0.0 : 100.0 * class_avg / static_cast<double>(classes_seen);
  }
  return result;
}

}  // namespace dsg

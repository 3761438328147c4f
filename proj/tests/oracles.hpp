#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Everything here is deliberately written as plain loops over the
// raw inputs, sharing no code with the library paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dsg/dataset.hpp"
#include "dsg/eval.hpp"
#include "dsg/geometry.hpp"
#include "dsg/matching.hpp"
#include "dsg/rng.hpp"
#include "dsg/tensor.hpp"

namespace oracles {

inline dsg::Tensor rnd_tensor(std::vector<int> shape, dsg::Rng& rng, double lo, double hi) {
  dsg::Tensor t(std::move(shape));
  for (double& v : t.data) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

// ---- metric reference ----------------------------------------------------

struct RefFrame {
  dsg::Tensor probs;  // [n_pairs, P]
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> sub_scores;
  std::vector<double> obj_scores;
  std::vector<char> class_ok;  // empty = all true
  std::vector<dsg::GroundTruthTriplet> gt;
};

struct RefCandidate {
  double score = 0.0;
  int s = 0, o = 0, p = 0;
  bool ok = true;
};

inline std::vector<RefCandidate> ref_candidates(const RefFrame& f, dsg::ConstraintMode mode,
                                                int cap) {
  const int np = static_cast<int>(f.pairs.size());
  const int pd = f.probs.cols();
  std::vector<RefCandidate> cands;
  for (int i = 0; i < np; ++i) {
    const bool ok = f.class_ok.empty() || f.class_ok[static_cast<std::size_t>(i)] != 0;
    const auto [s, o] = f.pairs[static_cast<std::size_t>(i)];
    if (mode == dsg::ConstraintMode::kWith) {
      int best = 0;
      for (int p = 1; p < pd; ++p) {
        if (f.probs.at(i, p) > f.probs.at(i, best)) best = p;
      }
      cands.push_back({f.sub_scores[static_cast<std::size_t>(i)] * f.probs.at(i, best) *
                           f.obj_scores[static_cast<std::size_t>(i)],
                       s, o, best, ok});
    } else {
      for (int p = 0; p < pd; ++p) {
        cands.push_back({f.sub_scores[static_cast<std::size_t>(i)] * f.probs.at(i, p) *
                             f.obj_scores[static_cast<std::size_t>(i)],
                         s, o, p, ok});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const RefCandidate& a, const RefCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::make_tuple(a.s, a.o, a.p) < std::make_tuple(b.s, b.o, b.p);
  });
  if (mode == dsg::ConstraintMode::kNo && static_cast<int>(cands.size()) > cap) {
    cands.resize(static_cast<std::size_t>(cap));
  }
  return cands;
}

inline dsg::EvalResult ref_evaluate(const std::vector<RefFrame>& frames,
                                    const std::vector<int>& ks, int num_predicates,
                                    dsg::ConstraintMode mode, int cap = 100) {
  dsg::EvalResult out;
  for (int k : ks) {
    double recall_sum = 0.0;
    int scored = 0;
    std::map<int, double> cls_sum;
    std::map<int, int> cls_frames;
    for (const RefFrame& f : frames) {
      if (f.gt.empty()) continue;
      ++scored;
      std::set<std::tuple<int, int, int>> gt;
      for (const auto& t : f.gt) gt.insert({t.subject, t.object, t.predicate});
      const auto cands = ref_candidates(f, mode, cap);
      std::set<std::tuple<int, int, int>> hits;
      for (int i = 0; i < std::min<int>(k, static_cast<int>(cands.size())); ++i) {
        const RefCandidate& c = cands[static_cast<std::size_t>(i)];
        if (c.ok && gt.count({c.s, c.o, c.p})) hits.insert({c.s, c.o, c.p});
      }
      recall_sum += static_cast<double>(hits.size()) / static_cast<double>(gt.size());
      for (int cls = 0; cls < num_predicates; ++cls) {
        int gt_c = 0, hit_c = 0;
        for (const auto& t : gt) gt_c += std::get<2>(t) == cls ? 1 : 0;
        for (const auto& t : hits) hit_c += std::get<2>(t) == cls ? 1 : 0;
        if (gt_c > 0) {
          cls_sum[cls] += static_cast<double>(hit_c) / static_cast<double>(gt_c);
          cls_frames[cls] += 1;
        }
      }
    }
    out.recall[k] = scored == 0 ? 0.0 : 100.0 * recall_sum / scored;
    double avg = 0.0;
    for (const auto& [cls, sum] : cls_sum) {
      const double r = sum / cls_frames.at(cls);
      out.class_recall[k][cls] = 100.0 * r;
      avg += r;
    }
    out.mean_recall[k] = cls_sum.empty() ? 0.0 : 100.0 * avg / static_cast<double>(cls_sum.size());
  }
  return out;
}

// ---- matching reference --------------------------------------------------

inline double ref_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double ref_iou(const dsg::Box& a, const dsg::Box& b) {
  const double ax = std::max(0.0, a.x2 - a.x1), ay = std::max(0.0, a.y2 - a.y1);
  const double bx = std::max(0.0, b.x2 - b.x1), by = std::max(0.0, b.y2 - b.y1);
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = (ax * ay > 0.0 && bx * by > 0.0) ? ix * iy : 0.0;
  const double uni = ax * ay + bx * by - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Exhaustive greedy linking: rescan every remaining candidate pair each
// round instead of pre-sorting, then walk the accepted links into chains.
inline std::vector<dsg::Tracklet> ref_link(
    const std::vector<std::vector<dsg::ObjectProposal>>& frames, double threshold) {
  const int nf = static_cast<int>(frames.size());
  std::vector<std::vector<int>> next(static_cast<std::size_t>(nf));
  std::vector<std::vector<int>> prev(static_cast<std::size_t>(nf));
  for (int f = 0; f < nf; ++f) {
    next[static_cast<std::size_t>(f)].assign(frames[static_cast<std::size_t>(f)].size(), -1);
    prev[static_cast<std::size_t>(f)].assign(frames[static_cast<std::size_t>(f)].size(), -1);
  }
  for (int f = 0; f + 1 < nf; ++f) {
    const auto& cur = frames[static_cast<std::size_t>(f)];
    const auto& nxt = frames[static_cast<std::size_t>(f + 1)];
    std::vector<char> used_cur(cur.size(), 0), used_nxt(nxt.size(), 0);
    while (true) {
      double best = -1e300;
      int bi = -1, bj = -1;
      for (int i = 0; i < static_cast<int>(cur.size()); ++i) {
        if (used_cur[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < static_cast<int>(nxt.size()); ++j) {
          if (used_nxt[static_cast<std::size_t>(j)]) continue;
          const auto& a = cur[static_cast<std::size_t>(i)];
          const auto& b = nxt[static_cast<std::size_t>(j)];
          const double s = ref_cosine(a.appearance, b.appearance) + ref_iou(a.box, b.box);
          if (s > best) {  // scan order already prefers the lowest (i, j)
            best = s;
            bi = i;
            bj = j;
          }
        }
      }
      if (bi < 0 || best < threshold) break;
      used_cur[static_cast<std::size_t>(bi)] = 1;
      used_nxt[static_cast<std::size_t>(bj)] = 1;
      next[static_cast<std::size_t>(f)][static_cast<std::size_t>(bi)] = bj;
      prev[static_cast<std::size_t>(f + 1)][static_cast<std::size_t>(bj)] = bi;
    }
  }
  std::vector<dsg::Tracklet> out;
  for (int f = 0; f < nf; ++f) {
    for (int i = 0; i < static_cast<int>(frames[static_cast<std::size_t>(f)].size()); ++i) {
      if (prev[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)] >= 0) continue;
      dsg::Tracklet t;
      int cf = f, ci = i;
      while (true) {
        t.members.push_back({cf, ci});
        const int nx = next[static_cast<std::size_t>(cf)][static_cast<std::size_t>(ci)];
        if (nx < 0) break;
        ++cf;
        ci = nx;
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

inline std::vector<std::vector<std::pair<int, int>>> tracklet_sets(
    const std::vector<dsg::Tracklet>& ts) {
  std::vector<std::vector<std::pair<int, int>>> out;
  for (const auto& t : ts) out.push_back(t.members);
  std::sort(out.begin(), out.end());
  return out;
}

// Monte-Carlo IoU estimate over the joint bounding region.
inline double mc_iou(const dsg::Box& a, const dsg::Box& b, int samples, dsg::Rng& rng) {
  const double x1 = std::min(a.x1, b.x1), x2 = std::max(a.x2, b.x2);
  const double y1 = std::min(a.y1, b.y1), y2 = std::max(a.y2, b.y2);
  if (x2 <= x1 || y2 <= y1) return 0.0;
  auto inside = [](const dsg::Box& box, double x, double y) {
    return box.x2 > box.x1 && box.y2 > box.y1 && x >= box.x1 && x <= box.x2 && y >= box.y1 &&
           y <= box.y2;
  };
  long long in_union = 0, in_inter = 0;
  for (int s = 0; s < samples; ++s) {
    const double x = rng.uniform(x1, x2);
    const double y = rng.uniform(y1, y2);
    const bool ia = inside(a, x, y), ib = inside(b, x, y);
    in_union += (ia || ib) ? 1 : 0;
    in_inter += (ia && ib) ? 1 : 0;
  }
  return in_union == 0 ? 0.0 : static_cast<double>(in_inter) / static_cast<double>(in_union);
}

// ---- dataset deep comparison ---------------------------------------------

inline bool videos_equal(const std::vector<dsg::Video>& a, const std::vector<dsg::Video>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].frames.size() != b[i].frames.size()) return false;
    for (std::size_t fi = 0; fi < a[i].frames.size(); ++fi) {
      const dsg::Frame& fa = a[i].frames[fi];
      const dsg::Frame& fb = b[i].frames[fi];
      if (fa.corrupted != fb.corrupted || fa.union_features != fb.union_features) return false;
      if (fa.objects.size() != fb.objects.size() || fa.relations.size() != fb.relations.size()) {
        return false;
      }
      for (std::size_t oi = 0; oi < fa.objects.size(); ++oi) {
        const dsg::FrameObject& oa = fa.objects[oi];
        const dsg::FrameObject& ob = fb.objects[oi];
        if (oa.appearance != ob.appearance || oa.class_scores != ob.class_scores ||
            oa.gt_class != ob.gt_class || oa.gt_track != ob.gt_track) {
          return false;
        }
        if (oa.box.x1 != ob.box.x1 || oa.box.y1 != ob.box.y1 || oa.box.x2 != ob.box.x2 ||
            oa.box.y2 != ob.box.y2) {
          return false;
        }
      }
      for (std::size_t ri = 0; ri < fa.relations.size(); ++ri) {
        const dsg::RelationAnnotation& ra = fa.relations[ri];
        const dsg::RelationAnnotation& rb = fb.relations[ri];
        if (ra.subject != rb.subject || ra.object != rb.object || ra.predicate != rb.predicate) {
          return false;
        }
      }
    }
  }
  return true;
}

inline bool datasets_equal(const dsg::Dataset& a, const dsg::Dataset& b) {
  return a.meta.num_classes == b.meta.num_classes &&
         a.meta.num_predicates == b.meta.num_predicates &&
         a.meta.feature_dim == b.meta.feature_dim && a.meta.union_dim == b.meta.union_dim &&
         a.meta.seed == b.meta.seed && a.meta.zipf_alpha == b.meta.zipf_alpha &&
         a.meta.noise_rate == b.meta.noise_rate && videos_equal(a.train, b.train) &&
         videos_equal(a.test, b.test);
}

// ---- small file helpers --------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace oracles

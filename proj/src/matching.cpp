#include "dsg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "dsg/errors.hpp"

namespace dsg {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: vector lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double match_score(const ObjectProposal& a, const ObjectProposal& b) {
  return cosine_similarity(a.appearance, b.appearance) + iou(a.box, b.box);
}

std::vector<Tracklet> link_objects(const std::vector<std::vector<ObjectProposal>>& frames,
                                   double threshold) {
  // track_of[t][j] = tracklet carrying object j of frame t; filled frame by frame.
  std::vector<std::vector<int>> track_of(frames.size());
  std::vector<Tracklet> tracklets;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    track_of[t].assign(frames[t].size(), -1);
  }

  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (t > 0) {
      const auto& prev = frames[t - 1];
      const auto& next = frames[t];
      // (negated score, prev index, next index): sorting ascending gives
      // best score first with lexicographic tie-breaks.
      std::vector<std::tuple<double, int, int>> candidates;
      candidates.reserve(prev.size() * next.size());
      for (std::size_t i = 0; i < prev.size(); ++i) {
        for (std::size_t j = 0; j < next.size(); ++j) {
          const double s = match_score(prev[i], next[j]);
          if (s >= threshold) {
            candidates.emplace_back(-s, static_cast<int>(i), static_cast<int>(j));
          }
        }
      }
      std::sort(candidates.begin(), candidates.end());
      std::vector<bool> prev_used(prev.size(), false), next_used(next.size(), false);
      for (const auto& [neg, i, j] : candidates) {
        (void)neg;
        if (prev_used[static_cast<std::size_t>(i)] || next_used[static_cast<std::size_t>(j)]) {
          continue;
        }
        prev_used[static_cast<std::size_t>(i)] = true;
        next_used[static_cast<std::size_t>(j)] = true;
        const int id = track_of[t - 1][static_cast<std::size_t>(i)];
        track_of[t][static_cast<std::size_t>(j)] = id;
        tracklets[static_cast<std::size_t>(id)].members.emplace_back(static_cast<int>(t), j);
      }
    }
    // Anything still unlinked in this frame starts a fresh tracklet.
    for (std::size_t j = 0; j < frames[t].size(); ++j) {
      if (track_of[t][j] < 0) {
        track_of[t][j] = static_cast<int>(tracklets.size());
        Tracklet fresh;
        fresh.members.emplace_back(static_cast<int>(t), static_cast<int>(j));
        tracklets.push_back(std::move(fresh));
      }
    }
  }
  return tracklets;
}

std::vector<std::vector<int>> tracklet_index(const std::vector<Tracklet>& tracklets,
                                             const std::vector<int>& frame_sizes) {
  std::vector<std::vector<int>> index(frame_sizes.size());
  for (std::size_t t = 0; t < frame_sizes.size(); ++t) {
    index[t].assign(static_cast<std::size_t>(frame_sizes[t]), -1);
  }
  for (std::size_t id = 0; id < tracklets.size(); ++id) {
    for (const auto& [frame, obj] : tracklets[id].members) {
      if (frame < 0 || frame >= static_cast<int>(frame_sizes.size()) || obj < 0 ||
          obj >= frame_sizes[static_cast<std::size_t>(frame)]) {
        throw ContractError("tracklet member (" + std::to_string(frame) + "," +
                            std::to_string(obj) + ") outside the video");
      }
      index[static_cast<std::size_t>(frame)][static_cast<std::size_t>(obj)] =
          static_cast<int>(id);
    }
  }
  for (std::size_t t = 0; t < index.size(); ++t) {
    for (std::size_t j = 0; j < index[t].size(); ++j) {
      if (index[t][j] < 0) {
        throw ContractError("object (" + std::to_string(t) + "," + std::to_string(j) +
                            ") belongs to no tracklet");
      }
    }
  }
  return index;
}

std::vector<std::vector<Neighborhood>> build_neighborhoods(
    const std::vector<Tracklet>& tracklets, const std::vector<int>& frame_sizes) {
  std::vector<std::vector<Neighborhood>> hoods(frame_sizes.size());
  for (std::size_t t = 0; t < frame_sizes.size(); ++t) {
    hoods[t].resize(static_cast<std::size_t>(frame_sizes[t]));
  }
  const auto index = tracklet_index(tracklets, frame_sizes);  // validates coverage
  (void)index;
  for (const Tracklet& tr : tracklets) {
    for (const auto& self : tr.members) {
      Neighborhood& h =
          hoods[static_cast<std::size_t>(self.first)][static_cast<std::size_t>(self.second)];
      for (const auto& other : tr.members) {
        if (other != self) h.members.push_back(other);
      }
    }
  }
  return hoods;
}

}  // namespace dsg

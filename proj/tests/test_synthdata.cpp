#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dsg/dataset.hpp"
#include "dsg/errors.hpp"
#include "dsg/rng.hpp"
#include "oracles.hpp"

using namespace dsg;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.num_videos = 12;
  c.test_fraction = 0.25;
  c.frames_per_video = 5;
  c.min_objects = 2;
  c.max_objects = 4;
  c.num_classes = 5;
  c.num_predicates = 8;
  c.feature_dim = 10;
  c.union_dim = 6;
  c.seed = 77;
  return c;
}

bool float_exact(double v) { return v == static_cast<double>(static_cast<float>(v)); }

template <typename Fn>
void for_each_object(const Dataset& d, Fn fn) {
  for (const auto* split : {&d.train, &d.test}) {
    for (const Video& v : *split) {
      for (const Frame& f : v.frames) {
        for (const FrameObject& o : f.objects) fn(v, f, o);
      }
    }
  }
}

}  // namespace

TEST_CASE("ordered_pairs enumerates subject-major without self pairs") {
  CHECK(ordered_pairs(1).empty());
  CHECK(ordered_pairs(3) == std::vector<std::pair<int, int>>{
                                {0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}});
  CHECK(ordered_pairs(5).size() == 20);
}

TEST_CASE("zipf probabilities are analytic and sampling matches them") {
  const int n = 6;
  const double alpha = 1.2;
  const ZipfSampler zipf(n, alpha);
  double norm = 0.0;
  for (int k = 0; k < n; ++k) norm += std::pow(static_cast<double>(k + 1), -alpha);
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const double want = std::pow(static_cast<double>(k + 1), -alpha) / norm;
    CHECK(zipf.probability(k) == doctest::Approx(want).epsilon(1e-12));
    total += zipf.probability(k);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(5);
  const int draws = 200000;
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(zipf.sample(rng))];
  for (int k = 0; k < n; ++k) {
    const double p = zipf.probability(k);
    const double sigma = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] - draws * p) <= 4.5 * sigma + 1.0);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate_dataset(small_config());
  const auto b = generate_dataset(small_config());
  CHECK(oracles::videos_equal(a.train, b.train));
  CHECK(oracles::videos_equal(a.test, b.test));

  auto other = small_config();
  other.seed = 78;
  const auto c = generate_dataset(other);
  CHECK_FALSE(oracles::videos_equal(a.train, c.train));
}

TEST_CASE("split sizes and video ids") {
  const auto d = generate_dataset(small_config());
  CHECK(d.train.size() == 12);
  CHECK(d.test.size() == 3);  // round(12 * 0.25)
  std::set<std::uint64_t> ids;
  for (const Video& v : d.train) ids.insert(v.id);
  for (const Video& v : d.test) ids.insert(v.id);
  CHECK(ids.size() == 15);  // disjoint across the splits
  CHECK(d.meta.num_classes == 5);
  CHECK(d.meta.num_predicates == 8);
  CHECK(d.meta.feature_dim == 10);
  CHECK(d.meta.union_dim == 6);
  CHECK(d.meta.seed == 77);
}

TEST_CASE("changing the test fraction leaves training videos untouched") {
  auto cfg = small_config();
  const auto a = generate_dataset(cfg);
  cfg.test_fraction = 0.5;
  const auto b = generate_dataset(cfg);
  CHECK(oracles::videos_equal(a.train, b.train));
  CHECK(b.test.size() == 6);
}

TEST_CASE("every stored value is float32-exact and boxes are sane") {
  const auto d = generate_dataset(small_config());
  for_each_object(d, [&](const Video&, const Frame&, const FrameObject& o) {
    CHECK(o.box.x2 > o.box.x1);
    CHECK(o.box.y2 > o.box.y1);
    CHECK(o.box.x1 >= 0.0);
    CHECK(o.box.y1 >= 0.0);
    CHECK(o.box.x2 <= 1.0);
    CHECK(o.box.y2 <= 1.0);
    for (double v : {o.box.x1, o.box.y1, o.box.x2, o.box.y2}) CHECK(float_exact(v));
    for (double v : o.appearance) CHECK(float_exact(v));
    for (double v : o.class_scores) CHECK(float_exact(v));
    CHECK(o.appearance.size() == 10);
    CHECK(o.class_scores.size() == 5);
    CHECK(o.gt_class >= 0);
    CHECK(o.gt_class < 5);
  });
  for (const Video& v : d.train) {
    for (const Frame& f : v.frames) {
      for (const auto& u : f.union_features) {
        CHECK(u.size() == 6);
        for (double x : u) CHECK(float_exact(x));
      }
    }
  }
}

TEST_CASE("object casts persist: tracks, classes, and relations are stable per video") {
  const auto d = generate_dataset(small_config());
  int videos_with_relations = 0;
  for (const Video& v : d.train) {
    REQUIRE(!v.frames.empty());
    const Frame& first = v.frames[0];
    auto relation_set = [](const Frame& f) {
      std::set<std::tuple<int, int, int>> s;
      for (const auto& r : f.relations) s.insert({r.subject, r.object, r.predicate});
      return s;
    };
    const auto base = relation_set(first);
    videos_with_relations += base.empty() ? 0 : 1;
    for (const Frame& f : v.frames) {
      REQUIRE(f.objects.size() == first.objects.size());
      CHECK(relation_set(f) == base);
      CHECK(f.union_features.size() == ordered_pairs(static_cast<int>(f.objects.size())).size());
      for (std::size_t i = 0; i < f.objects.size(); ++i) {
        CHECK(f.objects[i].gt_class == first.objects[i].gt_class);
        CHECK(f.objects[i].gt_track == first.objects[i].gt_track);
      }
      for (const auto& r : f.relations) {
        CHECK(r.subject != r.object);
        CHECK(r.subject < static_cast<int>(f.objects.size()));
        CHECK(r.predicate >= 0);
        CHECK(r.predicate < d.meta.num_predicates);
      }
    }
  }
  // A 0.35 positive rate over >= 2 ordered pairs leaves relation-free videos
  // possible but rare; most of the split must carry supervision.
  CHECK(videos_with_relations >= 6);
}

TEST_CASE("boxes drift smoothly between frames") {
  const auto d = generate_dataset(small_config());
  for (const Video& v : d.train) {
    for (std::size_t fi = 1; fi < v.frames.size(); ++fi) {
      const auto& prev = v.frames[fi - 1].objects;
      const auto& cur = v.frames[fi].objects;
      for (std::size_t oi = 0; oi < cur.size(); ++oi) {
        CHECK(std::abs(cur[oi].box.cx() - prev[oi].box.cx()) <= 0.5);
        CHECK(std::abs(cur[oi].box.cy() - prev[oi].box.cy()) <= 0.5);
      }
    }
  }
}

TEST_CASE("corruption flags follow the configured rate") {
  auto clean = small_config();
  clean.noise_rate = 0.0;
  for (const Video& v : generate_dataset(clean).train) {
    for (const Frame& f : v.frames) CHECK_FALSE(f.corrupted);
  }

  auto dirty = small_config();
  dirty.noise_rate = 1.0;
  for (const Video& v : generate_dataset(dirty).train) {
    for (const Frame& f : v.frames) CHECK(f.corrupted);
  }
}

TEST_CASE("clean class scores identify the class; corrupted ones often do not") {
  auto cfg = small_config();
  cfg.num_videos = 40;
  cfg.noise_rate = 0.5;
  const auto d = generate_dataset(cfg);
  int clean_total = 0, clean_right = 0, dirty_total = 0, dirty_right = 0;
  for_each_object(d, [&](const Video&, const Frame& f, const FrameObject& o) {
    const auto it = std::max_element(o.class_scores.begin(), o.class_scores.end());
    const int arg = static_cast<int>(it - o.class_scores.begin());
    if (f.corrupted) {
      ++dirty_total;
      dirty_right += arg == o.gt_class ? 1 : 0;
    } else {
      ++clean_total;
      clean_right += arg == o.gt_class ? 1 : 0;
    }
  });
  REQUIRE(clean_total > 100);
  REQUIRE(dirty_total > 100);
  CHECK(static_cast<double>(clean_right) >= 0.95 * clean_total);
  CHECK(static_cast<double>(dirty_right) <= 0.9 * dirty_total);
}

TEST_CASE("corruption hits appearance but leaves boxes and unions clean") {
  auto cfg = small_config();
  cfg.num_videos = 40;
  cfg.noise_rate = 0.5;
  const auto d = generate_dataset(cfg);

  double clean_jump = 0.0, dirty_jump = 0.0;
  int clean_n = 0, dirty_n = 0;
  for (const Video& v : d.train) {
    for (std::size_t fi = 1; fi < v.frames.size(); ++fi) {
      const Frame& prev = v.frames[fi - 1];
      const Frame& cur = v.frames[fi];

      // Box extents never change; only the center drifts, and slowly.
      for (std::size_t oi = 0; oi < cur.objects.size(); ++oi) {
        const Box& a = prev.objects[oi].box;
        const Box& b = cur.objects[oi].box;
        CHECK(std::abs(a.width() - b.width()) <= 1e-5);
        CHECK(std::abs(a.height() - b.height()) <= 1e-5);
        CHECK(std::abs(a.cx() - b.cx()) <= 0.2);
        CHECK(std::abs(a.cy() - b.cy()) <= 0.2);
      }

      // Union features move only by per-frame jitter, corrupted or not.
      REQUIRE(prev.union_features.size() == cur.union_features.size());
      for (std::size_t q = 0; q < cur.union_features.size(); ++q) {
        for (std::size_t j = 0; j < cur.union_features[q].size(); ++j) {
          CHECK(std::abs(cur.union_features[q][j] - prev.union_features[q][j]) <= 0.5);
        }
      }

      // Appearance jumps hard exactly when corruption is involved.
      for (std::size_t oi = 0; oi < cur.objects.size(); ++oi) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < cur.objects[oi].appearance.size(); ++j) {
          const double diff = cur.objects[oi].appearance[j] - prev.objects[oi].appearance[j];
          norm2 += diff * diff;
        }
        if (prev.corrupted || cur.corrupted) {
          dirty_jump += std::sqrt(norm2);
          ++dirty_n;
        } else {
          clean_jump += std::sqrt(norm2);
          ++clean_n;
        }
      }
    }
  }
  REQUIRE(clean_n > 50);
  REQUIRE(dirty_n > 50);
  CHECK(dirty_jump / dirty_n > 3.0 * (clean_jump / clean_n));
}

TEST_CASE("predicate counts show the long tail") {
  GeneratorConfig cfg;  // defaults: 200 videos, 20 predicates, alpha 1.2
  cfg.num_videos = 200;
  cfg.seed = 3;
  const auto d = generate_dataset(cfg);
  const auto counts = predicate_counts(d.train, d.meta.num_predicates);
  REQUIRE(counts.size() == 20);
  long long total = 0;
  for (long long c : counts) total += c;
  CHECK(total > 0);
  // Head vastly outweighs the tail end.
  CHECK(counts[0] > 10 * std::max<long long>(1, counts[19]));
  // And the head matches the Zipf share within a loose band.
  const ZipfSampler zipf(20, 1.2);
  const double head_share = static_cast<double>(counts[0]) / static_cast<double>(total);
  CHECK(head_share > 0.6 * zipf.probability(0));
  CHECK(head_share < 1.4 * zipf.probability(0));
}

TEST_CASE("predicate_counts validates the predicate range") {
  const auto d = generate_dataset(small_config());
  CHECK_THROWS_AS(predicate_counts(d.train, 2), ContractError);
}

TEST_CASE("generator rejects nonsensical configurations") {
  auto bad = small_config();
  bad.min_objects = 5;
  bad.max_objects = 3;
  CHECK_THROWS_AS(generate_dataset(bad), ContractError);
  auto none = small_config();
  none.num_videos = 0;
  CHECK_THROWS_AS(generate_dataset(none), ContractError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsg/binio.hpp"
#include "dsg/dataset.hpp"
#include "dsg/dataset_io.hpp"
#include "dsg/errors.hpp"
#include "oracles.hpp"

using namespace dsg;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "dsg_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

GeneratorConfig io_config() {
  GeneratorConfig c;
  c.num_videos = 6;
  c.test_fraction = 0.3;
  c.frames_per_video = 3;
  c.min_objects = 2;
  c.max_objects = 3;
  c.num_classes = 4;
  c.num_predicates = 5;
  c.feature_dim = 7;
  c.union_dim = 4;
  c.noise_rate = 0.4;  // exercise the corrupted flag in the manifest
  c.seed = 11;
  return c;
}

// Blob with six rank-1 records; record 4 is stored as f64 to exercise both
// dtypes. Appearances have 3 values, scores 2, unions 2, matching the
// fixture manifest's meta.
std::vector<std::uint8_t> fixture_blob() {
  std::vector<std::uint8_t> b;
  append_bytes(b, "TDSG", 4);
  append_u32(b, 1);  // version
  append_u32(b, 6);  // record count
  auto f32_record = [&](const std::vector<float>& v) {
    append_u8(b, 0);
    append_u8(b, 1);
    append_u32(b, static_cast<std::uint32_t>(v.size()));
    for (float x : v) append_f32(b, x);
  };
  f32_record({1.5f, -2.25f, 0.5f});   // 0: appearance of object 0
  f32_record({0.75f, 0.25f});         // 1: scores of object 0
  f32_record({0.0f, 1.0f, 2.0f});     // 2: appearance of object 1
  f32_record({0.125f, 0.875f});       // 3: scores of object 1
  append_u8(b, 1);                    // 4: union (0,1), stored as f64
  append_u8(b, 1);
  append_u32(b, 2);
  append_f64(b, 3.5);
  append_f64(b, -1.5);
  f32_record({2.25f, 4.0f});          // 5: union (1,0)
  return b;
}

const char* kFixtureManifest = R"({
 "format": "TDSG",
 "version": 1,
 "meta": {
  "num_classes": 2,
  "num_predicates": 4,
  "feature_dim": 3,
  "union_dim": 2,
  "seed": 9,
  "zipf_alpha": 1.1,
  "noise_rate": 0.25
 },
 "blob": "fixture.bin",
 "train": [
  {
   "id": 3,
   "frames": [
    {
     "corrupted": true,
     "objects": [
      {"box": [0.1, 0.2, 0.5, 0.6], "class": 1, "track": 0, "appearance": 0, "scores": 1},
      {"box": [0.3, 0.3, 0.9, 0.8], "class": 0, "track": 1, "appearance": 2, "scores": 3}
     ],
     "relations": [[0, 1, 2]],
     "unions": [4, 5]
    }
   ]
  }
 ],
 "test": []
})";

struct Fixture {
  std::filesystem::path manifest;
  std::filesystem::path blob;
};

Fixture write_fixture(const std::string& manifest_text, const std::vector<std::uint8_t>& blob) {
  Fixture f;
  f.manifest = temp_dir() / "fixture.json";
  f.blob = temp_dir() / "fixture.bin";
  oracles::write_file(f.manifest.string(), manifest_text);
  write_file_bytes(f.blob.string(), blob);
  return f;
}

}  // namespace

TEST_CASE("write then read returns the identical dataset") {
  const auto dir = temp_dir();
  const Dataset d = generate_dataset(io_config());
  const auto path = (dir / "roundtrip.json").string();
  write_dataset(d, path);
  const Dataset back = read_dataset(path);
  CHECK(oracles::datasets_equal(d, back));

  // And writing the re-read dataset reproduces both files byte for byte.
  // Same basename in a sibling directory, since the manifest records the
  // blob's own filename.
  const auto dir2 = dir / "again";
  std::filesystem::create_directories(dir2);
  const auto path2 = (dir2 / "roundtrip.json").string();
  write_dataset(back, path2);
  CHECK(oracles::read_file(path) == oracles::read_file(path2));
  CHECK(read_file_bytes((dir / "roundtrip.bin").string()) ==
        read_file_bytes((dir2 / "roundtrip.bin").string()));
}

TEST_CASE("blob header carries magic and version") {
  const auto dir = temp_dir();
  const auto path = (dir / "header.json").string();
  write_dataset(generate_dataset(io_config()), path);
  const auto bytes = read_file_bytes((dir / "header.bin").string());
  REQUIRE(bytes.size() >= 12);
  CHECK(bytes[0] == 'T');
  CHECK(bytes[1] == 'D');
  CHECK(bytes[2] == 'S');
  CHECK(bytes[3] == 'G');
  const std::uint32_t version = static_cast<std::uint32_t>(bytes[4]) |
                                static_cast<std::uint32_t>(bytes[5]) << 8 |
                                static_cast<std::uint32_t>(bytes[6]) << 16 |
                                static_cast<std::uint32_t>(bytes[7]) << 24;
  CHECK(version == kDatasetFormatVersion);
}

TEST_CASE("hand-written fixture parses to the expected dataset") {
  const Fixture f = write_fixture(kFixtureManifest, fixture_blob());
  const Dataset d = read_dataset(f.manifest.string());

  CHECK(d.meta.num_classes == 2);
  CHECK(d.meta.num_predicates == 4);
  CHECK(d.meta.feature_dim == 3);
  CHECK(d.meta.union_dim == 2);
  CHECK(d.meta.seed == 9);
  CHECK(d.meta.zipf_alpha == 1.1);
  CHECK(d.meta.noise_rate == 0.25);
  CHECK(d.test.empty());
  REQUIRE(d.train.size() == 1);
  const Video& v = d.train[0];
  CHECK(v.id == 3);
  REQUIRE(v.frames.size() == 1);
  const Frame& fr = v.frames[0];
  CHECK(fr.corrupted);
  REQUIRE(fr.objects.size() == 2);
  CHECK(fr.objects[0].box.x1 == 0.1);
  CHECK(fr.objects[0].box.y2 == 0.6);
  CHECK(fr.objects[0].gt_class == 1);
  CHECK(fr.objects[0].gt_track == 0);
  CHECK(fr.objects[0].appearance == std::vector<double>{1.5, -2.25, 0.5});
  CHECK(fr.objects[0].class_scores == std::vector<double>{0.75, 0.25});
  CHECK(fr.objects[1].appearance == std::vector<double>{0.0, 1.0, 2.0});
  CHECK(fr.objects[1].class_scores == std::vector<double>{0.125, 0.875});
  REQUIRE(fr.relations.size() == 1);
  CHECK(fr.relations[0].subject == 0);
  CHECK(fr.relations[0].object == 1);
  CHECK(fr.relations[0].predicate == 2);
  REQUIRE(fr.union_features.size() == 2);
  CHECK(fr.union_features[0] == std::vector<double>{3.5, -1.5});
  CHECK(fr.union_features[1] == std::vector<double>{2.25, 4.0});

  // Round-trip the fixture through the writer; values survive exactly.
  const auto out = (temp_dir() / "fixture_rewrite.json").string();
  write_dataset(d, out);
  CHECK(oracles::datasets_equal(d, read_dataset(out)));
}

TEST_CASE("blob corruption is reported with context") {
  auto valid = fixture_blob();

  SUBCASE("bad magic") {
    auto bytes = valid;
    bytes[0] = 'X';
    const Fixture f = write_fixture(kFixtureManifest, bytes);
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()),
                         doctest::Contains("bad magic"), ParseError);
  }

  SUBCASE("unsupported version") {
    auto bytes = valid;
    bytes[4] = 2;
    const Fixture f = write_fixture(kFixtureManifest, bytes);
    CHECK_THROWS_AS(read_dataset(f.manifest.string()), VersionError);
  }

  SUBCASE("truncated payload names the record and offset") {
    auto bytes = valid;
    bytes.resize(bytes.size() - 3);
    const Fixture f = write_fixture(kFixtureManifest, bytes);
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("record 5"),
                         ParseError);
  }

  SUBCASE("trailing bytes are rejected") {
    auto bytes = valid;
    bytes.push_back(0);
    const Fixture f = write_fixture(kFixtureManifest, bytes);
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("trailing"),
                         ParseError);
  }

  SUBCASE("unknown dtype") {
    auto bytes = valid;
    bytes[12] = 7;  // first record's dtype byte
    const Fixture f = write_fixture(kFixtureManifest, bytes);
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("dtype"),
                         ParseError);
  }
}

TEST_CASE("manifest problems are reported with the offending field") {
  auto patched = [&](const std::string& from, const std::string& to) {
    std::string text = kFixtureManifest;
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), to);
    return write_fixture(text, fixture_blob());
  };

  SUBCASE("wrong format string") {
    const Fixture f = patched("\"TDSG\"", "\"GSDT\"");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("format"),
                         ParseError);
  }

  SUBCASE("unsupported manifest version") {
    const Fixture f = patched("\"version\": 1", "\"version\": 99");
    CHECK_THROWS_AS(read_dataset(f.manifest.string()), VersionError);
  }

  SUBCASE("missing field") {
    const Fixture f = patched("\"track\": 0, ", "");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("track"),
                         ParseError);
  }

  SUBCASE("blob record index out of range") {
    const Fixture f = patched("\"appearance\": 0", "\"appearance\": 99");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("out of range"),
                         ParseError);
  }

  SUBCASE("record length does not match the declared dimensions") {
    // Point the first scores at an appearance record (3 values, 2 expected).
    const Fixture f = patched("\"scores\": 1", "\"scores\": 0");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("expected 2"),
                         ParseError);
  }

  SUBCASE("union count must match the ordered pair count") {
    const Fixture f = patched("\"unions\": [4, 5]", "\"unions\": [4]");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("unions"),
                         ParseError);
  }

  SUBCASE("malformed relation triple") {
    const Fixture f = patched("[[0, 1, 2]]", "[[0, 1]]");
    CHECK_THROWS_WITH_AS(read_dataset(f.manifest.string()), doctest::Contains("relations"),
                         ParseError);
  }

  SUBCASE("invalid JSON") {
    const Fixture f = patched("\"test\": []", "\"test\": [");
    CHECK_THROWS_AS(read_dataset(f.manifest.string()), ParseError);
  }

  SUBCASE("missing manifest file") {
    CHECK_THROWS_AS(read_dataset((temp_dir() / "no_such.json").string()), ParseError);
  }

  SUBCASE("missing blob file") {
    const Fixture f = patched("\"blob\": \"fixture.bin\"", "\"blob\": \"gone.bin\"");
    CHECK_THROWS_AS(read_dataset(f.manifest.string()), ParseError);
  }
}

#include "dsg/dataset_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dsg/binio.hpp"

namespace dsg {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'D', 'S', 'G'};

struct BlobWriter {
  std::vector<std::uint8_t> bytes;
  std::uint32_t count = 0;

  int add_f32_vector(const std::vector<double>& v) {
    append_u8(bytes, 0);  // dtype f32
    append_u8(bytes, 1);  // rank
    append_u32(bytes, static_cast<std::uint32_t>(v.size()));
    for (double x : v) append_f32(bytes, static_cast<float>(x));
    return static_cast<int>(count++);
  }
};

struct BlobRecord {
  std::vector<double> values;
};

std::vector<BlobRecord> parse_blob(const std::vector<std::uint8_t>& bytes) {
  Cursor cur(bytes);
  char magic[4];
  cur.read_bytes(magic, 4, "magic");
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw ParseError("bad magic at byte 0: expected \"TDSG\", got \"" +
                     std::string(magic, 4) + "\"");
  }
  const std::uint32_t version = cur.read_u32("version");
  if (version != kDatasetFormatVersion) {
    throw VersionError("dataset blob version " + std::to_string(version) +
                       " unsupported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  const std::uint32_t count = cur.read_u32("record count");
  std::vector<BlobRecord> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string tag = "record " + std::to_string(r);
    const std::uint8_t dtype = cur.read_u8(tag + " dtype");
    if (dtype > 1) {
      throw ParseError("unknown dtype " + std::to_string(dtype) + " in " + tag + " at byte " +
                       std::to_string(cur.offset() - 1));
    }
    const std::uint8_t rank = cur.read_u8(tag + " rank");
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      numel *= cur.read_u32(tag + " dim " + std::to_string(d));
    }
    BlobRecord rec;
    rec.values.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) {
      rec.values[i] = dtype == 0 ? static_cast<double>(cur.read_f32(tag + " payload"))
                                 : cur.read_f64(tag + " payload");
    }
    records.push_back(std::move(rec));
  }
  if (!cur.at_end()) {
    throw ParseError(std::to_string(cur.remaining()) + " trailing bytes after record " +
                     std::to_string(count) + " at byte " + std::to_string(cur.offset()));
  }
  return records;
}

// ---- manifest field access with error context

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ParseError("manifest field '" + field + "': " + what);
}

const json& get_field(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains(field)) field_error(field, "missing");
  return j.at(field);
}

long long get_int(const json& j, const std::string& field) {
  const json& v = get_field(j, field);
  if (!v.is_number_integer()) field_error(field, "expected an integer");
  return v.get<long long>();
}

double get_number(const json& j, const std::string& field) {
  const json& v = get_field(j, field);
  if (!v.is_number()) field_error(field, "expected a number");
  return v.get<double>();
}

const json& get_array(const json& j, const std::string& field) {
  const json& v = get_field(j, field);
  if (!v.is_array()) field_error(field, "expected an array");
  return v;
}

json video_to_json(const Video& video, BlobWriter& blob) {
  json jv;
  jv["id"] = video.id;
  json jframes = json::array();
  for (const Frame& f : video.frames) {
    json jf;
    jf["corrupted"] = f.corrupted;
    json jobjects = json::array();
    for (const FrameObject& o : f.objects) {
      json jo;
      jo["box"] = {o.box.x1, o.box.y1, o.box.x2, o.box.y2};
      jo["class"] = o.gt_class;
      jo["track"] = o.gt_track;
      jo["appearance"] = blob.add_f32_vector(o.appearance);
      jo["scores"] = blob.add_f32_vector(o.class_scores);
      jobjects.push_back(std::move(jo));
    }
    jf["objects"] = std::move(jobjects);
    json jrel = json::array();
    for (const RelationAnnotation& r : f.relations) {
      jrel.push_back({r.subject, r.object, r.predicate});
    }
    jf["relations"] = std::move(jrel);
    json juni = json::array();
    for (const auto& u : f.union_features) juni.push_back(blob.add_f32_vector(u));
    jf["unions"] = std::move(juni);
    jframes.push_back(std::move(jf));
  }
  jv["frames"] = std::move(jframes);
  return jv;
}

const std::vector<double>& blob_vector(const std::vector<BlobRecord>& records, long long index,
                                       std::size_t expected_len, const std::string& field) {
  if (index < 0 || index >= static_cast<long long>(records.size())) {
    field_error(field, "blob record index " + std::to_string(index) + " out of range (" +
                           std::to_string(records.size()) + " records)");
  }
  const auto& v = records[static_cast<std::size_t>(index)].values;
  if (v.size() != expected_len) {
    field_error(field, "blob record " + std::to_string(index) + " has " +
                           std::to_string(v.size()) + " values, expected " +
                           std::to_string(expected_len));
  }
  return v;
}

Video video_from_json(const json& jv, const std::vector<BlobRecord>& records,
                      const DatasetMeta& meta) {
  Video video;
  video.id = static_cast<std::uint64_t>(get_int(jv, "id"));
  for (const json& jf : get_array(jv, "frames")) {
    Frame frame;
    const json& corrupted = get_field(jf, "corrupted");
    if (!corrupted.is_boolean()) field_error("corrupted", "expected a boolean");
    frame.corrupted = corrupted.get<bool>();
    for (const json& jo : get_array(jf, "objects")) {
      FrameObject obj;
      const json& box = get_array(jo, "box");
      if (box.size() != 4) field_error("box", "expected 4 numbers");
      obj.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                 box[3].get<double>()};
      obj.gt_class = static_cast<int>(get_int(jo, "class"));
      obj.gt_track = static_cast<int>(get_int(jo, "track"));
      obj.appearance = blob_vector(records, get_int(jo, "appearance"),
                                   static_cast<std::size_t>(meta.feature_dim), "appearance");
      obj.class_scores = blob_vector(records, get_int(jo, "scores"),
                                     static_cast<std::size_t>(meta.num_classes), "scores");
      frame.objects.push_back(std::move(obj));
    }
    for (const json& jr : get_array(jf, "relations")) {
      if (!jr.is_array() || jr.size() != 3) field_error("relations", "expected [s, o, p] triples");
      frame.relations.push_back(
          {jr[0].get<int>(), jr[1].get<int>(), jr[2].get<int>()});
    }
    const json& juni = get_array(jf, "unions");
    const auto pairs = ordered_pairs(static_cast<int>(frame.objects.size()));
    if (juni.size() != pairs.size()) {
      field_error("unions", "expected " + std::to_string(pairs.size()) + " entries for " +
                                std::to_string(frame.objects.size()) + " objects, got " +
                                std::to_string(juni.size()));
    }
    for (const json& ju : juni) {
      if (!ju.is_number_integer()) field_error("unions", "expected record indices");
      frame.union_features.push_back(blob_vector(records, ju.get<long long>(),
                                                 static_cast<std::size_t>(meta.union_dim),
                                                 "unions"));
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

std::filesystem::path blob_path_for(const std::string& manifest_path) {
  std::filesystem::path p(manifest_path);
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& manifest_path) {
  BlobWriter blob;
  json root;
  root["format"] = "TDSG";
  root["version"] = kDatasetFormatVersion;
  json jmeta;
  jmeta["num_classes"] = dataset.meta.num_classes;
  jmeta["num_predicates"] = dataset.meta.num_predicates;
  jmeta["feature_dim"] = dataset.meta.feature_dim;
  jmeta["union_dim"] = dataset.meta.union_dim;
  jmeta["seed"] = dataset.meta.seed;
  jmeta["zipf_alpha"] = dataset.meta.zipf_alpha;
  jmeta["noise_rate"] = dataset.meta.noise_rate;
  root["meta"] = std::move(jmeta);
  json jtrain = json::array();
  for (const Video& v : dataset.train) jtrain.push_back(video_to_json(v, blob));
  json jtest = json::array();
  for (const Video& v : dataset.test) jtest.push_back(video_to_json(v, blob));
  root["train"] = std::move(jtrain);
  root["test"] = std::move(jtest);

  const std::filesystem::path blob_path = blob_path_for(manifest_path);
  root["blob"] = blob_path.filename().string();

  std::vector<std::uint8_t> blob_bytes;
  append_bytes(blob_bytes, kMagic, 4);
  append_u32(blob_bytes, kDatasetFormatVersion);
  append_u32(blob_bytes, blob.count);
  append_bytes(blob_bytes, blob.bytes.data(), blob.bytes.size());
  write_file_bytes(blob_path.string(), blob_bytes);

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw ParseError("cannot open '" + manifest_path + "' for writing");
  out << root.dump(1) << "\n";
  if (!out) throw ParseError("write to '" + manifest_path + "' failed");
}

Dataset read_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot open '" + manifest_path + "' for reading");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest '" + manifest_path + "': " + e.what());
  }

  const json& format = get_field(root, "format");
  if (!format.is_string() || format.get<std::string>() != "TDSG") {
    field_error("format", "expected \"TDSG\"");
  }
  const long long version = get_int(root, "version");
  if (version != kDatasetFormatVersion) {
    throw VersionError("manifest version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kDatasetFormatVersion) + ")");
  }

  Dataset ds;
  const json& jmeta = get_field(root, "meta");
  ds.meta.num_classes = static_cast<int>(get_int(jmeta, "num_classes"));
  ds.meta.num_predicates = static_cast<int>(get_int(jmeta, "num_predicates"));
  ds.meta.feature_dim = static_cast<int>(get_int(jmeta, "feature_dim"));
  ds.meta.union_dim = static_cast<int>(get_int(jmeta, "union_dim"));
  ds.meta.seed = static_cast<std::uint64_t>(get_int(jmeta, "seed"));
  ds.meta.zipf_alpha = get_number(jmeta, "zipf_alpha");
  ds.meta.noise_rate = get_number(jmeta, "noise_rate");

  const json& jblob = get_field(root, "blob");
  if (!jblob.is_string()) field_error("blob", "expected a filename string");
  const std::filesystem::path blob_path =
      std::filesystem::path(manifest_path).parent_path() / jblob.get<std::string>();
  const auto records = parse_blob(read_file_bytes(blob_path.string()));

  for (const json& jv : get_array(root, "train")) {
    ds.train.push_back(video_from_json(jv, records, ds.meta));
  }
  for (const json& jv : get_array(root, "test")) {
    ds.test.push_back(video_from_json(jv, records, ds.meta));
  }
  return ds;
}

}  // namespace dsg

#pragma once

#include <string>

#include "dsg/dataset.hpp"

namespace dsg {

// Dataset on disk = JSON manifest + binary tensor blob side by side. The
// manifest holds structure and scalar annotations and refers to feature
// vectors by record index into the blob. The blob is a "TDSG" container:
//   magic "TDSG" | u32 version | u32 record count | records...
// each record: u8 dtype (0 = f32, 1 = f64) | u8 rank | u32 dims[rank] |
// little-endian payload. Feature vectors are stored as f32 (the generator
// quantizes them, so this is lossless).

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// Writes <manifest_path> and the blob next to it (same path with the
// extension replaced by .bin). The manifest stores only the blob filename.
void write_dataset(const Dataset& dataset, const std::string& manifest_path);

// Throws ParseError on malformed input (with byte offset or field name)
// and VersionError when the format version does not match.
Dataset read_dataset(const std::string& manifest_path);

}  // namespace dsg

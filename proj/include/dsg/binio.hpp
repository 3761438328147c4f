#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsg/errors.hpp"

namespace dsg {

// Little-endian byte packing shared by the dataset blob and checkpoint
// formats. The cursor throws ParseError carrying the byte offset and the
// name of the field being read, so truncated or garbled files fail loudly.

void append_u8(std::vector<std::uint8_t>& out, std::uint8_t v);
void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void append_f32(std::vector<std::uint8_t>& out, float v);
void append_f64(std::vector<std::uint8_t>& out, double v);
void append_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n);

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t read_u8(const std::string& field);
  std::uint32_t read_u32(const std::string& field);
  std::uint64_t read_u64(const std::string& field);
  float read_f32(const std::string& field);
  double read_f64(const std::string& field);
  void read_bytes(void* dst, std::size_t n, const std::string& field);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& field);
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace dsg

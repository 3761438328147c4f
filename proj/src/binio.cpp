#include "dsg/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dsg {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

void append_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  append_bytes(out, &v, sizeof v);
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  append_bytes(out, &v, sizeof v);
}

void append_f32(std::vector<std::uint8_t>& out, float v) { append_bytes(out, &v, sizeof v); }

void append_f64(std::vector<std::uint8_t>& out, double v) { append_bytes(out, &v, sizeof v); }

void append_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

void Cursor::need(std::size_t n, const std::string& field) {
  if (offset_ + n > bytes_.size()) {
    throw ParseError("unexpected end of data at byte " + std::to_string(offset_) +
                     " while reading '" + field + "' (" + std::to_string(n) + " bytes needed, " +
                     std::to_string(bytes_.size() - offset_) + " left)");
  }
}

std::uint8_t Cursor::read_u8(const std::string& field) {
  need(1, field);
  return bytes_[offset_++];
}

std::uint32_t Cursor::read_u32(const std::string& field) {
  std::uint32_t v;
  read_bytes(&v, sizeof v, field);
  return v;
}

std::uint64_t Cursor::read_u64(const std::string& field) {
  std::uint64_t v;
  read_bytes(&v, sizeof v, field);
  return v;
}

float Cursor::read_f32(const std::string& field) {
  float v;
  read_bytes(&v, sizeof v, field);
  return v;
}

double Cursor::read_f64(const std::string& field) {
  double v;
  read_bytes(&v, sizeof v, field);
  return v;
}

void Cursor::read_bytes(void* dst, std::size_t n, const std::string& field) {
  need(n, field);
  std::memcpy(dst, bytes_.data() + offset_, n);
  offset_ += n;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write to '" + path + "' failed");
}

}  // namespace dsg

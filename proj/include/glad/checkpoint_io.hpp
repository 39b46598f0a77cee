#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glad/tensor.hpp"

namespace glad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

// GLCK layout, little-endian throughout:
//   "GLCK" | u32 version | u32 entry count |
//   per entry: u32 name length, UTF-8 name, u32 rank, u64 extents[rank],
//              f32 values[product(extents)]
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& entries);
std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint_file(const std::filesystem::path& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> load_checkpoint_file(const std::filesystem::path& path);

// Exact little-endian byte codec shared by the binary formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void raw(const void* data, std::size_t n);
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string string(std::size_t n);
  std::size_t remaining() const { return bytes_.size() - pos_; }
  // Throws TruncatedFile unless n more bytes are available.
  void need(std::size_t n) const;

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace glad

#include "glad/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace glad {

static_assert(std::numeric_limits<float>::is_iec559, "f32 payloads assume IEEE-754");

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(ErrorCode::TruncatedFile, "need " + std::to_string(n) + " bytes at offset " +
                                              std::to_string(pos_));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::string(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& entries) {
  ByteWriter w;
  w.raw("GLCK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint entry " + e.name);
    }
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto extent : e.shape) w.u64(extent);
    for (float v : e.values) w.f32(v);
  }
  return std::move(w.bytes());
}

std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.string(4) != "GLCK") throw Error(ErrorCode::BadMagic, "not a GLCK file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionUnsupported, "GLCK version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> entries;
  entries.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray e;
    e.name = r.string(r.u32());
    const std::uint32_t rank = r.u32();
    r.need(8ull * rank);
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<std::size_t>(r.u64()));
    const std::size_t n = shape_numel(e.shape);
    r.need(4 * n);
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32();
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::IoFailure, "trailing bytes after GLCK entries");
  return entries;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void save_checkpoint_file(const std::filesystem::path& path, const std::vector<NamedArray>& entries) {
  write_file_bytes(path, encode_checkpoint(entries));
}

std::vector<NamedArray> load_checkpoint_file(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace glad

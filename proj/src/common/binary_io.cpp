#include "common/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace nodulekit {

void ByteWriter::put_floats(std::span<const float> values) {
  const std::size_t offset = bytes_.size();
  bytes_.resize(offset + values.size() * sizeof(float));
  std::memcpy(bytes_.data() + offset, values.data(), values.size() * sizeof(float));
  if constexpr (std::endian::native == std::endian::big) {
    auto* f = reinterpret_cast<float*>(bytes_.data() + offset);
    for (std::size_t i = 0; i < values.size(); ++i) f[i] = byteswap_value(f[i]);
  }
}

void ByteReader::require(std::size_t n) const {
  if (n > remaining()) {
    fail(truncated_code_, "unexpected end of data at byte " + std::to_string(pos_) +
                              " (need " + std::to_string(n) + ", have " +
                              std::to_string(remaining()) + ")");
  }
}

std::string ByteReader::get_string(std::size_t n) {
  require(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::get_floats(std::span<float> out) {
  require(out.size() * sizeof(float));
  std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(float));
  pos_ += out.size() * sizeof(float);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : out) f = byteswap_value(f);
  }
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  ByteWriter w;
  w.put_floats(values);
  write_file_bytes(path, w.bytes());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % sizeof(float) != 0) {
    fail(ErrorCode::kPayloadSizeMismatch, path.string() + ": size is not a multiple of 4");
  }
  std::vector<float> values(bytes.size() / sizeof(float));
  ByteReader r(bytes, ErrorCode::kPayloadSizeMismatch);
  r.get_floats(values);
  return values;
}

}  // namespace nodulekit

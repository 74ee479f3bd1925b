#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/error.hpp"

namespace nodulekit {

template <typename T>
T byteswap_value(T value) noexcept {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    if constexpr (std::endian::native == std::endian::big) value = byteswap_value(value);
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void put_floats(std::span<const float> values);

  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }
  std::vector<unsigned char> release() noexcept { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

/// Bounds-checked little-endian cursor. Reads past the end throw `truncated_code`.
class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> data, ErrorCode truncated_code)
      : data_(data), truncated_code_(truncated_code) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) value = byteswap_value(value);
    return value;
  }

  std::string get_string(std::size_t n);
  void get_floats(std::span<float> out);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void require(std::size_t n) const;

  std::span<const unsigned char> data_;
  std::size_t pos_ = 0;
  ErrorCode truncated_code_;
};

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

/// Raw float32 little-endian matrix files (no header).
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

}  // namespace nodulekit

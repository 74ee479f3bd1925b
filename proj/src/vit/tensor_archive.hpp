#pragma once

// NSTA tensor archive, little-endian, no padding:
//   "NSTA" | u32 version (=1) | u32 M | M bytes JSON metadata | u32 count |
//   count x { u32 name_len | name | u8 dtype (1 = f32) | u8 rank |
//             rank x u64 dims | prod(dims) x f32 }

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nodulekit::vit {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::size_t numel() const noexcept;
};

/// Named tensors in insertion order plus a JSON metadata block.
class TensorArchive {
 public:
  std::string metadata = "{}";

  void add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  const Tensor* find(std::string_view name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<unsigned char> save_tensor_archive(const TensorArchive& archive);
TensorArchive load_tensor_archive(std::span<const unsigned char> bytes);

void write_tensor_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_tensor_archive(const std::filesystem::path& path);

}  // namespace nodulekit::vit

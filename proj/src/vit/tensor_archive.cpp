#include "vit/tensor_archive.hpp"

#include "common/binary_io.hpp"
#include "common/error.hpp"

namespace nodulekit::vit {

namespace {
constexpr std::string_view kMagic = "NSTA";
constexpr std::uint8_t kFloat32 = 1;
}  // namespace

std::size_t Tensor::numel() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

void TensorArchive::add(std::string name, Tensor tensor) {
  if (index_.contains(name)) fail(ErrorCode::kCorruptArchive, "duplicate tensor name " + name);
  if (tensor.data.size() != tensor.numel()) {
    fail(ErrorCode::kShapeMismatch, "tensor " + name + " payload does not match its dims");
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool TensorArchive::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

const Tensor* TensorArchive::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const Tensor& TensorArchive::get(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  fail(ErrorCode::kMissingTensor, std::string(name));
}

std::vector<unsigned char> save_tensor_archive(const TensorArchive& archive) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kArchiveVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.metadata.size()));
  w.put_bytes(archive.metadata);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, t] : archive.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(kFloat32);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.put<std::uint64_t>(d);
    w.put_floats(t.data);
  }
  return w.release();
}

TensorArchive load_tensor_archive(std::span<const unsigned char> bytes) {
  ByteReader r(bytes, ErrorCode::kCorruptArchive);
  if (bytes.size() < kMagic.size() || r.get_string(kMagic.size()) != kMagic) {
    fail(ErrorCode::kBadMagic, "not an NSTA archive");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    fail(ErrorCode::kUnsupportedVersion, "NSTA version " + std::to_string(version) + " unsupported");
  }
  TensorArchive archive;
  archive.metadata = r.get_string(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kFloat32) {
      fail(ErrorCode::kCorruptArchive, "tensor " + name + " has unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = r.get<std::uint8_t>();
    Tensor t;
    std::size_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint64_t>());
      numel *= static_cast<std::size_t>(t.dims.back());
    }
    if (numel > r.remaining() / sizeof(float)) {
      fail(ErrorCode::kCorruptArchive, "tensor " + name + " payload exceeds archive size");
    }
    t.data.resize(numel);
    r.get_floats(t.data);
    archive.add(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::kCorruptArchive, std::to_string(r.remaining()) + " trailing bytes after last tensor");
  }
  return archive;
}

void write_tensor_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  write_file_bytes(path, save_tensor_archive(archive));
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingArtifact, "archive " + path.string() + " not found");
  return load_tensor_archive(read_file_bytes(path));
}

}  // namespace nodulekit::vit

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "vit/tensor_archive.hpp"

namespace nodulekit::vit {

struct EncoderConfig {
  std::size_t image_size = 504;
  std::size_t patch_size = 14;
  std::size_t embed_dim = 0;
  std::size_t depth = 0;
  std::size_t num_heads = 0;
  double mlp_ratio = 4.0;
  std::size_t pretrain_grid = 16;
  double layer_norm_eps = 1e-6;
  // Optional per-channel input standardization, applied before patchify.
  std::optional<std::array<double, 3>> pixel_mean;
  std::optional<std::array<double, 3>> pixel_std;

  std::size_t grid() const noexcept { return image_size / patch_size; }
  std::size_t num_patches() const noexcept { return grid() * grid(); }
  std::size_t patch_dim() const noexcept { return 3 * patch_size * patch_size; }
  std::size_t hidden_dim() const noexcept;

  void validate() const;
};

EncoderConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EncoderConfig& c);

/// Row-major token matrix: `count` rows of `dim` floats.
struct Tokens {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  Tokens() = default;
  Tokens(std::size_t n, std::size_t d) : count(n), dim(d), data(n * d, 0.0f) {}

  std::span<float> row(std::size_t i) { return std::span(data).subspan(i * dim, dim); }
  std::span<const float> row(std::size_t i) const { return std::span(data).subspan(i * dim, dim); }
};

/// y = W x + b, W stored out x in.
struct Linear {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<float> weight;
  std::vector<float> bias;
};

struct LayerNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
};

struct BlockParams {
  LayerNormParams ln1;
  Linear qkv;
  Linear proj;
  std::optional<std::vector<float>> ls1;
  LayerNormParams ln2;
  Linear fc1;
  Linear fc2;
  std::optional<std::vector<float>> ls2;
};

struct EncoderParams {
  EncoderConfig config;
  Linear patch_embed;  // D x (3 p^2), flattening order (channel, row, col)
  std::vector<float> cls_token;
  Tokens pos_embed;  // 1 + pretrain_grid^2 rows; row 0 belongs to CLS
  std::vector<BlockParams> blocks;
  LayerNormParams norm;
};

/// Validates names and shapes against the metadata config.
EncoderParams encoder_from_archive(const TensorArchive& archive);
TensorArchive encoder_to_archive(const EncoderParams& params);

/// Seeded random initialization, used for smoke tests and desk-scale runs.
EncoderParams random_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Every weight, bias and embedding zero; LayerNorm gammas one.
EncoderParams zero_encoder(const EncoderConfig& config);

/// Image is channel-major 3 x S x S. Patches are ordered row-major over the
/// grid; each vector is flattened in (channel, row, col) order.
Tokens patchify(std::span<const float> image, std::size_t image_size, std::size_t patch_size);
std::vector<float> unpatchify(const Tokens& patches, std::size_t image_size, std::size_t patch_size);

/// Bilinear resampling of a (src_grid^2 x D) positional grid to target_grid^2
/// rows, same half-pixel convention as patch::resize_bilinear.
Tokens interpolate_pos_grid(const Tokens& grid_rows, std::size_t src_grid, std::size_t target_grid);

/// Returns N + 1 tokens: CLS first, positional embeddings added.
Tokens embed_tokens(const Tokens& patches, const EncoderParams& params);

Tokens layer_norm(const Tokens& x, std::span<const float> gamma, std::span<const float> beta,
                  double eps = 1e-6);

Tokens linear(const Tokens& x, const Linear& layer, std::size_t workers = 1);

/// Optional capture of per-head attention matrices (heads x N x N).
struct AttentionTrace {
  std::vector<std::vector<double>> heads;
};

Tokens multi_head_attention(const Tokens& x, const Linear& qkv, const Linear& proj,
                            std::size_t num_heads, AttentionTrace* trace = nullptr,
                            std::size_t workers = 1);

double gelu(double x) noexcept;

/// x + LS1(MHA(LN1 x)), then + LS2(MLP(LN2 x)).
Tokens transformer_block(const Tokens& x, const BlockParams& block, std::size_t num_heads,
                         double eps = 1e-6, std::size_t workers = 1);

struct EncoderOutput {
  std::vector<float> cls;
  Tokens patch_tokens;
  std::vector<float> gap;
};

/// Full forward pass. `workers` parallelizes row-wise work only, so the result
/// is identical for every worker count.
EncoderOutput encoder_forward(std::span<const float> image, const EncoderParams& params,
                              std::size_t workers = 1);

}  // namespace nodulekit::vit

#include "vit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/random.hpp"

namespace nodulekit::vit {

std::size_t EncoderConfig::hidden_dim() const noexcept {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0) fail(ErrorCode::kInvalidArgument, "image and patch sizes must be > 0");
  if (image_size % patch_size != 0) {
    fail(ErrorCode::kNonDivisibleInput, "image_size " + std::to_string(image_size) +
                                            " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim < 2) fail(ErrorCode::kInvalidArgument, "embed_dim must be >= 2");
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    fail(ErrorCode::kInvalidArgument, "embed_dim must be divisible by num_heads");
  }
  if (depth < 1) fail(ErrorCode::kInvalidArgument, "depth must be >= 1");
  if (pretrain_grid < 1) fail(ErrorCode::kInvalidArgument, "pretrain_grid must be >= 1");
  if (!(mlp_ratio > 0.0) || hidden_dim() == 0) fail(ErrorCode::kInvalidArgument, "mlp_ratio must be > 0");
  if (!(layer_norm_eps > 0.0)) fail(ErrorCode::kInvalidArgument, "layer_norm_eps must be > 0");
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.pretrain_grid = j.value("pretrain_grid", c.pretrain_grid);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    if (j.contains("pixel_mean")) c.pixel_mean = j.at("pixel_mean").get<std::array<double, 3>>();
    if (j.contains("pixel_std")) c.pixel_std = j.at("pixel_std").get<std::array<double, 3>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptArchive, std::string("encoder metadata: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const EncoderConfig& c) {
  nlohmann::json j = {{"image_size", c.image_size},       {"patch_size", c.patch_size},
                      {"embed_dim", c.embed_dim},         {"depth", c.depth},
                      {"num_heads", c.num_heads},         {"mlp_ratio", c.mlp_ratio},
                      {"pretrain_grid", c.pretrain_grid}, {"layer_norm_eps", c.layer_norm_eps}};
  if (c.pixel_mean) j["pixel_mean"] = *c.pixel_mean;
  if (c.pixel_std) j["pixel_std"] = *c.pixel_std;
  return j;
}

// ---------------------------------------------------------------------------
// Archive mapping

namespace {

void expect_dims(const std::string& name, const Tensor& t, std::vector<std::uint64_t> dims) {
  if (t.dims != dims) {
    std::string got;
    for (auto d : t.dims) got += (got.empty() ? "" : ",") + std::to_string(d);
    std::string want;
    for (auto d : dims) want += (want.empty() ? "" : ",") + std::to_string(d);
    fail(ErrorCode::kShapeMismatch, name + ": shape [" + got + "], expected [" + want + "]");
  }
}

std::vector<float> take_vector(const TensorArchive& a, const std::string& name, std::size_t n) {
  const auto& t = a.get(name);
  expect_dims(name, t, {n});
  return t.data;
}

Linear take_linear(const TensorArchive& a, const std::string& prefix, std::size_t out, std::size_t in) {
  const auto& w = a.get(prefix + ".weight");
  expect_dims(prefix + ".weight", w, {out, in});
  Linear l;
  l.out = out;
  l.in = in;
  l.weight = w.data;
  l.bias = take_vector(a, prefix + ".bias", out);
  return l;
}

LayerNormParams take_norm(const TensorArchive& a, const std::string& prefix, std::size_t d) {
  return {take_vector(a, prefix + ".weight", d), take_vector(a, prefix + ".bias", d)};
}

void put_linear(TensorArchive& a, const std::string& prefix, const Linear& l) {
  a.add(prefix + ".weight", {{l.out, l.in}, l.weight});
  a.add(prefix + ".bias", {{l.out}, l.bias});
}

void put_norm(TensorArchive& a, const std::string& prefix, const LayerNormParams& n) {
  a.add(prefix + ".weight", {{n.gamma.size()}, n.gamma});
  a.add(prefix + ".bias", {{n.beta.size()}, n.beta});
}

}  // namespace

EncoderParams encoder_from_archive(const TensorArchive& archive) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.metadata);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptArchive, std::string("archive metadata is not JSON: ") + e.what());
  }
  EncoderParams p;
  p.config = config_from_json(meta.contains("encoder") ? meta.at("encoder") : meta);
  const auto& c = p.config;
  const std::size_t d = c.embed_dim;
  const std::size_t ps = c.patch_size;

  const auto& pe = archive.get("patch_embed.weight");
  expect_dims("patch_embed.weight", pe, {d, 3, ps, ps});
  p.patch_embed.out = d;
  p.patch_embed.in = c.patch_dim();
  p.patch_embed.weight = pe.data;
  p.patch_embed.bias = take_vector(archive, "patch_embed.bias", d);

  const auto& cls = archive.get("cls_token");
  expect_dims("cls_token", cls, {1, 1, d});
  p.cls_token = cls.data;

  const std::size_t pos_rows = 1 + c.pretrain_grid * c.pretrain_grid;
  const auto& pos = archive.get("pos_embed");
  expect_dims("pos_embed", pos, {1, pos_rows, d});
  p.pos_embed = Tokens(pos_rows, d);
  p.pos_embed.data = pos.data;

  const std::size_t h = c.hidden_dim();
  for (std::size_t i = 0; i < c.depth; ++i) {
    const std::string b = "blocks." + std::to_string(i);
    BlockParams blk;
    blk.ln1 = take_norm(archive, b + ".ln1", d);
    blk.qkv = take_linear(archive, b + ".attn.qkv", 3 * d, d);
    blk.proj = take_linear(archive, b + ".attn.proj", d, d);
    if (archive.contains(b + ".ls1.gamma")) blk.ls1 = take_vector(archive, b + ".ls1.gamma", d);
    blk.ln2 = take_norm(archive, b + ".ln2", d);
    blk.fc1 = take_linear(archive, b + ".mlp.fc1", h, d);
    blk.fc2 = take_linear(archive, b + ".mlp.fc2", d, h);
    if (archive.contains(b + ".ls2.gamma")) blk.ls2 = take_vector(archive, b + ".ls2.gamma", d);
    p.blocks.push_back(std::move(blk));
  }
  p.norm = take_norm(archive, "norm", d);
  return p;
}

TensorArchive encoder_to_archive(const EncoderParams& p) {
  const auto& c = p.config;
  TensorArchive a;
  a.metadata = to_json(c).dump();
  a.add("patch_embed.weight", {{c.embed_dim, 3, c.patch_size, c.patch_size}, p.patch_embed.weight});
  a.add("patch_embed.bias", {{c.embed_dim}, p.patch_embed.bias});
  a.add("cls_token", {{1, 1, c.embed_dim}, p.cls_token});
  a.add("pos_embed", {{1, p.pos_embed.count, c.embed_dim}, p.pos_embed.data});
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string b = "blocks." + std::to_string(i);
    const auto& blk = p.blocks[i];
    put_norm(a, b + ".ln1", blk.ln1);
    put_linear(a, b + ".attn.qkv", blk.qkv);
    put_linear(a, b + ".attn.proj", blk.proj);
    if (blk.ls1) a.add(b + ".ls1.gamma", {{c.embed_dim}, *blk.ls1});
    put_norm(a, b + ".ln2", blk.ln2);
    put_linear(a, b + ".mlp.fc1", blk.fc1);
    put_linear(a, b + ".mlp.fc2", blk.fc2);
    if (blk.ls2) a.add(b + ".ls2.gamma", {{c.embed_dim}, *blk.ls2});
  }
  put_norm(a, "norm", p.norm);
  return a;
}

namespace {

Linear make_linear(std::size_t out, std::size_t in) {
  return {out, in, std::vector<float>(out * in, 0.0f), std::vector<float>(out, 0.0f)};
}

LayerNormParams make_norm(std::size_t d) {
  return {std::vector<float>(d, 1.0f), std::vector<float>(d, 0.0f)};
}

void fill_normal(std::vector<float>& v, Rng& rng, double stddev) {
  for (auto& x : v) x = static_cast<float>(stddev * standard_normal(rng));
}

}  // namespace

EncoderParams zero_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  const std::size_t d = config.embed_dim;
  p.patch_embed = make_linear(d, config.patch_dim());
  p.cls_token.assign(d, 0.0f);
  p.pos_embed = Tokens(1 + config.pretrain_grid * config.pretrain_grid, d);
  for (std::size_t i = 0; i < config.depth; ++i) {
    BlockParams b;
    b.ln1 = make_norm(d);
    b.qkv = make_linear(3 * d, d);
    b.proj = make_linear(d, d);
    b.ln2 = make_norm(d);
    b.fc1 = make_linear(config.hidden_dim(), d);
    b.fc2 = make_linear(d, config.hidden_dim());
    p.blocks.push_back(std::move(b));
  }
  p.norm = make_norm(d);
  return p;
}

EncoderParams random_encoder(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = zero_encoder(config);
  Rng rng(seed);
  const auto fan_in_std = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  fill_normal(p.patch_embed.weight, rng, fan_in_std(p.patch_embed.in));
  fill_normal(p.patch_embed.bias, rng, 0.02);
  fill_normal(p.cls_token, rng, 0.02);
  fill_normal(p.pos_embed.data, rng, 0.02);
  for (auto& b : p.blocks) {
    for (Linear* l : {&b.qkv, &b.proj, &b.fc1, &b.fc2}) {
      fill_normal(l->weight, rng, fan_in_std(l->in));
      fill_normal(l->bias, rng, 0.02);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward ops

Tokens patchify(std::span<const float> image, std::size_t s, std::size_t ps) {
  if (ps == 0 || s % ps != 0) {
    fail(ErrorCode::kNonDivisibleInput, "image size " + std::to_string(s) +
                                            " not divisible by patch size " + std::to_string(ps));
  }
  if (image.size() != 3 * s * s) fail(ErrorCode::kShapeMismatch, "image must be 3 x S x S");
  const std::size_t g = s / ps;
  Tokens out(g * g, 3 * ps * ps);
  for (std::size_t py = 0; py < g; ++py) {
    for (std::size_t px = 0; px < g; ++px) {
      auto row = out.row(py * g + px);
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t r = 0; r < ps; ++r) {
          const float* src = image.data() + (c * s + py * ps + r) * s + px * ps;
          for (std::size_t col = 0; col < ps; ++col) row[k++] = src[col];
        }
      }
    }
  }
  return out;
}

std::vector<float> unpatchify(const Tokens& patches, std::size_t s, std::size_t ps) {
  const std::size_t g = s / ps;
  if (ps == 0 || s % ps != 0) fail(ErrorCode::kNonDivisibleInput, "image size not divisible by patch size");
  if (patches.count != g * g || patches.dim != 3 * ps * ps) {
    fail(ErrorCode::kShapeMismatch, "patch matrix does not match image geometry");
  }
  std::vector<float> image(3 * s * s);
  for (std::size_t py = 0; py < g; ++py) {
    for (std::size_t px = 0; px < g; ++px) {
      const auto row = patches.row(py * g + px);
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t r = 0; r < ps; ++r) {
          float* dst = image.data() + (c * s + py * ps + r) * s + px * ps;
          for (std::size_t col = 0; col < ps; ++col) dst[col] = row[k++];
        }
      }
    }
  }
  return image;
}

Tokens interpolate_pos_grid(const Tokens& grid_rows, std::size_t src, std::size_t dst) {
  if (grid_rows.count != src * src) fail(ErrorCode::kShapeMismatch, "positional grid is not src x src");
  if (src == dst) return grid_rows;
  const std::size_t d = grid_rows.dim;
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double x = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0,
                                static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(x));
    taps[i] = {i0, std::min(i0 + 1, src - 1), x - static_cast<double>(i0)};
  }
  Tokens out(dst * dst, d);
  for (std::size_t r = 0; r < dst; ++r) {
    for (std::size_t c = 0; c < dst; ++c) {
      const auto& tr = taps[r];
      const auto& tc = taps[c];
      const auto a = grid_rows.row(tr.i0 * src + tc.i0);
      const auto b = grid_rows.row(tr.i0 * src + tc.i1);
      const auto e = grid_rows.row(tr.i1 * src + tc.i0);
      const auto f = grid_rows.row(tr.i1 * src + tc.i1);
      auto o = out.row(r * dst + c);
      for (std::size_t k = 0; k < d; ++k) {
        const double top = a[k] + tc.f * (static_cast<double>(b[k]) - a[k]);
        const double bottom = e[k] + tc.f * (static_cast<double>(f[k]) - e[k]);
        o[k] = static_cast<float>(top + tr.f * (bottom - top));
      }
    }
  }
  return out;
}

Tokens linear(const Tokens& x, const Linear& layer, std::size_t workers) {
  if (x.dim != layer.in) {
    fail(ErrorCode::kShapeMismatch, "linear expects input dim " + std::to_string(layer.in) +
                                        ", got " + std::to_string(x.dim));
  }
  Tokens out(x.count, layer.out);
  // Small layers run inline; threading only pays for itself on large matrices.
  const std::size_t flops = x.count * layer.in * layer.out;
  parallel_for(x.count, flops > (1u << 22) ? workers : 1, [&](std::size_t n) {
    const auto in = x.row(n);
    auto o = out.row(n);
    for (std::size_t j = 0; j < layer.out; ++j) {
      const float* w = layer.weight.data() + j * layer.in;
      double acc = layer.bias[j];
      for (std::size_t i = 0; i < layer.in; ++i) acc += static_cast<double>(w[i]) * in[i];
      o[j] = static_cast<float>(acc);
    }
  });
  return out;
}

Tokens embed_tokens(const Tokens& patches, const EncoderParams& params) {
  const auto& c = params.config;
  if (patches.dim != c.patch_dim()) fail(ErrorCode::kShapeMismatch, "patch vectors have the wrong length");
  const std::size_t g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(patches.count))));
  if (g * g != patches.count) fail(ErrorCode::kShapeMismatch, "patch count is not a square grid");
  const std::size_t d = c.embed_dim;

  const Tokens projected = linear(patches, params.patch_embed);
  Tokens grid_pos(c.pretrain_grid * c.pretrain_grid, d);
  std::copy(params.pos_embed.data.begin() + static_cast<std::ptrdiff_t>(d), params.pos_embed.data.end(),
            grid_pos.data.begin());
  const Tokens pos = interpolate_pos_grid(grid_pos, c.pretrain_grid, g);

  Tokens out(patches.count + 1, d);
  const auto cls_pos = params.pos_embed.row(0);
  auto cls = out.row(0);
  for (std::size_t k = 0; k < d; ++k) cls[k] = params.cls_token[k] + cls_pos[k];
  for (std::size_t n = 0; n < patches.count; ++n) {
    auto o = out.row(n + 1);
    const auto pr = projected.row(n);
    const auto pp = pos.row(n);
    for (std::size_t k = 0; k < d; ++k) o[k] = pr[k] + pp[k];
  }
  return out;
}

Tokens layer_norm(const Tokens& x, std::span<const float> gamma, std::span<const float> beta,
                  double eps) {
  if (gamma.size() != x.dim || beta.size() != x.dim) fail(ErrorCode::kShapeMismatch, "layer norm parameter size");
  Tokens out(x.count, x.dim);
  const double d = static_cast<double>(x.dim);
  for (std::size_t n = 0; n < x.count; ++n) {
    const auto in = x.row(n);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= d;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(n);
    for (std::size_t k = 0; k < x.dim; ++k) {
      o[k] = static_cast<float>((in[k] - mean) * inv * gamma[k] + beta[k]);
    }
  }
  return out;
}

Tokens multi_head_attention(const Tokens& x, const Linear& qkv, const Linear& proj,
                            std::size_t num_heads, AttentionTrace* trace, std::size_t workers) {
  const std::size_t d = x.dim;
  if (num_heads == 0 || d % num_heads != 0) fail(ErrorCode::kShapeMismatch, "embed dim not divisible by heads");
  if (qkv.out != 3 * d || proj.in != d || proj.out != d) fail(ErrorCode::kShapeMismatch, "attention projection shapes");
  const std::size_t n = x.count;
  const std::size_t hd = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Tokens q_k_v = linear(x, qkv, workers);

  Tokens heads_out(n, d);
  if (trace) trace->heads.assign(num_heads, std::vector<double>(n * n));
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t q_off = h * hd;
    const std::size_t k_off = d + h * hd;
    const std::size_t v_off = 2 * d + h * hd;
    parallel_for(n, n * n * hd > (1u << 20) ? workers : 1, [&](std::size_t i) {
      const auto qi = q_k_v.row(i).subspan(q_off, hd);
      std::vector<double> weights(n);
      double max_score = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        const auto kj = q_k_v.row(j).subspan(k_off, hd);
        double s = 0.0;
        for (std::size_t t = 0; t < hd; ++t) s += static_cast<double>(qi[t]) * kj[t];
        weights[j] = s * scale;
        max_score = std::max(max_score, weights[j]);
      }
      double total = 0.0;
      for (auto& w : weights) {
        w = std::exp(w - max_score);
        total += w;
      }
      for (auto& w : weights) w /= total;
      std::vector<double> acc(hd, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const auto vj = q_k_v.row(j).subspan(v_off, hd);
        for (std::size_t t = 0; t < hd; ++t) acc[t] += weights[j] * vj[t];
      }
      auto o = heads_out.row(i).subspan(h * hd, hd);
      for (std::size_t t = 0; t < hd; ++t) o[t] = static_cast<float>(acc[t]);
      if (trace) std::copy(weights.begin(), weights.end(), trace->heads[h].begin() + static_cast<std::ptrdiff_t>(i * n));
    });
  }
  return linear(heads_out, proj, workers);
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

namespace {

void add_residual(Tokens& x, const Tokens& branch, const std::optional<std::vector<float>>& gamma) {
  for (std::size_t n = 0; n < x.count; ++n) {
    auto xr = x.row(n);
    const auto br = branch.row(n);
    for (std::size_t k = 0; k < x.dim; ++k) {
      const float scaled = gamma ? (*gamma)[k] * br[k] : br[k];
      xr[k] += scaled;
    }
  }
}

}  // namespace

Tokens transformer_block(const Tokens& x, const BlockParams& b, std::size_t num_heads, double eps,
                         std::size_t workers) {
  Tokens out = x;
  const Tokens attn = multi_head_attention(layer_norm(out, b.ln1.gamma, b.ln1.beta, eps), b.qkv,
                                           b.proj, num_heads, nullptr, workers);
  add_residual(out, attn, b.ls1);
  Tokens hidden = linear(layer_norm(out, b.ln2.gamma, b.ln2.beta, eps), b.fc1, workers);
  for (auto& v : hidden.data) v = static_cast<float>(gelu(v));
  const Tokens mlp = linear(hidden, b.fc2, workers);
  add_residual(out, mlp, b.ls2);
  return out;
}

EncoderOutput encoder_forward(std::span<const float> image, const EncoderParams& params,
                              std::size_t workers) {
  const auto& c = params.config;
  const std::size_t s = c.image_size;
  if (image.size() != 3 * s * s) {
    fail(ErrorCode::kShapeMismatch, "encoder expects a 3 x " + std::to_string(s) + " x " +
                                        std::to_string(s) + " image, got " +
                                        std::to_string(image.size()) + " values");
  }
  std::vector<float> standardized;
  if (c.pixel_mean || c.pixel_std) {
    standardized.assign(image.begin(), image.end());
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double mean = c.pixel_mean ? (*c.pixel_mean)[ch] : 0.0;
      const double stddev = c.pixel_std ? (*c.pixel_std)[ch] : 1.0;
      for (std::size_t i = 0; i < s * s; ++i) {
        auto& v = standardized[ch * s * s + i];
        v = static_cast<float>((v - mean) / stddev);
      }
    }
    image = standardized;
  }

  Tokens x = embed_tokens(patchify(image, s, c.patch_size), params);
  for (const auto& block : params.blocks) {
    x = transformer_block(x, block, c.num_heads, c.layer_norm_eps, workers);
  }
  x = layer_norm(x, params.norm.gamma, params.norm.beta, c.layer_norm_eps);

  EncoderOutput out;
  const std::size_t d = c.embed_dim;
  out.cls.assign(x.row(0).begin(), x.row(0).end());
  out.patch_tokens = Tokens(x.count - 1, d);
  std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(d), x.data.end(), out.patch_tokens.data.begin());
  std::vector<double> sum(d, 0.0);
  for (std::size_t n = 0; n < out.patch_tokens.count; ++n) {
    const auto r = out.patch_tokens.row(n);
    for (std::size_t k = 0; k < d; ++k) sum[k] += r[k];
  }
  out.gap.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    out.gap[k] = static_cast<float>(sum[k] / static_cast<double>(out.patch_tokens.count));
  }
  return out;
}

}  // namespace nodulekit::vit

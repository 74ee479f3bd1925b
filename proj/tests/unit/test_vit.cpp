#include <cmath>
#include <cstring>
#include <numeric>

#include "common/binary_io.hpp"
#include "common/random.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"
#include "vit/encoder.hpp"
#include "vit/tensor_archive.hpp"

using namespace nodulekit;
using namespace nodulekit::vit;

namespace {

EncoderConfig tiny(std::size_t image = 56, std::size_t grid = 16) {
  EncoderConfig c;
  c.image_size = image;
  c.patch_size = 14;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_heads = 4;
  c.pretrain_grid = grid;
  return c;
}

std::vector<float> random_image(std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> img(3 * s * s);
  for (auto& v : img) v = static_cast<float>(uniform01(rng));
  return img;
}

Tokens random_tokens(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  Tokens t(n, d);
  for (auto& v : t.data) v = static_cast<float>(scale * standard_normal(rng));
  return t;
}

Linear random_linear(std::size_t out, std::size_t in, Rng& rng, double scale) {
  Linear l{out, in, std::vector<float>(out * in), std::vector<float>(out)};
  for (auto& v : l.weight) v = static_cast<float>(scale * standard_normal(rng));
  for (auto& v : l.bias) v = static_cast<float>(0.1 * standard_normal(rng));
  return l;
}

Linear identity_linear(std::size_t d) {
  Linear l{d, d, std::vector<float>(d * d, 0.0f), std::vector<float>(d, 0.0f)};
  for (std::size_t i = 0; i < d; ++i) l.weight[i * d + i] = 1.0f;
  return l;
}

}  // namespace

TEST_CASE("patchify token counts and lossless rearrangement") {
  CHECK(patchify(std::vector<float>(3 * 504 * 504, 0.0f), 504, 14).count == 1296);
  CHECK(patchify(std::vector<float>(3 * 28 * 28, 0.0f), 28, 14).count == 4);
  NK_CHECK_ERROR(patchify(std::vector<float>(3 * 30 * 30, 0.0f), 30, 14), kNonDivisibleInput);

  const auto img = random_image(42, 1);
  const auto p = patchify(img, 42, 14);
  CHECK(p.dim == 3 * 14 * 14);
  CHECK(unpatchify(p, 42, 14) == img);
  // Patch 1 is the second patch of the first grid row; its first entry is
  // channel 0, row 0, col 14 of the image.
  CHECK(p.row(1)[0] == img[14]);
  // Entry (channel 1, row 2, col 3) inside patch 3 = grid (1, 0).
  CHECK(p.row(3)[1 * 196 + 2 * 14 + 3] == img[(1 * 42 + 14 + 2) * 42 + 3]);
}

TEST_CASE("embed_tokens") {
  auto params = zero_encoder(tiny());
  Rng rng(2);
  for (auto& v : params.cls_token) v = static_cast<float>(standard_normal(rng));
  const auto patches = patchify(random_image(56, 3), 56, 14);
  const auto t = embed_tokens(patches, params);
  CHECK(t.count == 17);
  for (std::size_t k = 0; k < 32; ++k) CHECK(t.row(0)[k] == params.cls_token[k]);
  for (std::size_t n = 1; n < t.count; ++n)
    for (float v : t.row(n)) CHECK(v == 0.0f);

  // Same grid: positional rows pass through untouched.
  auto same = zero_encoder(tiny(56, 4));
  for (auto& v : same.pos_embed.data) v = static_cast<float>(standard_normal(rng));
  const auto ts = embed_tokens(patches, same);
  CHECK(std::equal(ts.data.begin(), ts.data.end(), same.pos_embed.data.begin()));

  // 2x2 constant grid to 3x3.
  Tokens grid(4, 5);
  std::fill(grid.data.begin(), grid.data.end(), 0.37f);
  const auto up = interpolate_pos_grid(grid, 2, 3);
  CHECK(up.count == 9);
  for (float v : up.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-7));
}

TEST_CASE("layer_norm") {
  Tokens a(1, 2);
  a.data = {1.0f, 3.0f};
  const std::vector<float> one(2, 1.0f), zero(2, 0.0f);
  const auto n = layer_norm(a, one, zero);
  CHECK(n.data[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(n.data[1] == doctest::Approx(1.0).epsilon(1e-6));

  Tokens c(1, 8);
  std::fill(c.data.begin(), c.data.end(), 5.0f);
  const std::vector<float> g8(8, 1.0f), b8(8, 0.0f);
  for (float v : layer_norm(c, g8, b8).data) CHECK(std::abs(v) <= 1e-2);

  Rng rng(3);
  const auto x = random_tokens(200, 64, rng, 3.0);
  const std::vector<float> g(64, 1.0f), b(64, 0.0f);
  const auto y = layer_norm(x, g, b);
  for (std::size_t t = 0; t < y.count; ++t) {
    double mean = 0, var = 0;
    for (float v : y.row(t)) mean += v;
    mean /= 64;
    for (float v : y.row(t)) var += (v - mean) * (v - mean);
    var /= 64;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1) < 1e-4);
  }
}

TEST_CASE("attention: uniform weights give the token mean") {
  Rng rng(4);
  const std::size_t d = 8;
  const auto x = random_tokens(6, d, rng);
  Linear qkv{3 * d, d, std::vector<float>(3 * d * d, 0.0f), std::vector<float>(3 * d, 0.0f)};
  for (std::size_t i = 0; i < d; ++i) qkv.weight[(2 * d + i) * d + i] = 1.0f;  // V = identity
  AttentionTrace trace;
  const auto y = multi_head_attention(x, qkv, identity_linear(d), 2, &trace);
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0;
    for (std::size_t n = 0; n < 6; ++n) mean += x.row(n)[k];
    mean /= 6;
    for (std::size_t n = 0; n < 6; ++n) CHECK(y.row(n)[k] == doctest::Approx(mean).epsilon(1e-6));
  }
  for (const auto& h : trace.heads)
    for (double w : h) CHECK(w == doctest::Approx(1.0 / 6));
}

TEST_CASE("attention: single token ignores Q and K") {
  Rng rng(5);
  const std::size_t d = 8;
  const auto x = random_tokens(1, d, rng);
  const auto qkv = random_linear(3 * d, d, rng, 0.5);
  const auto proj = random_linear(d, d, rng, 0.5);
  const auto y = multi_head_attention(x, qkv, proj, 4);
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = qkv.bias[2 * d + i];
    for (std::size_t k = 0; k < d; ++k) s += qkv.weight[(2 * d + i) * d + k] * x.data[k];
    v[i] = s;
  }
  for (std::size_t o = 0; o < d; ++o) {
    double s = proj.bias[o];
    for (std::size_t i = 0; i < d; ++i) s += proj.weight[o * d + i] * v[i];
    CHECK(y.data[o] == doctest::Approx(s).epsilon(1e-6));
  }
}

TEST_CASE("attention: two tokens, one head, evaluated by hand") {
  // x0 = (1,0), x1 = (0,1); q = x, k = (2 x_0, 0), v = (x_0 + 2 x_1, 3 x_0 + 4 x_1).
  Tokens x(2, 2);
  x.data = {1, 0, 0, 1};
  Linear qkv{6, 2, {1, 0, 0, 1, 2, 0, 0, 0, 1, 2, 3, 4}, std::vector<float>(6, 0.0f)};
  const auto y = multi_head_attention(x, qkv, identity_linear(2), 1);
  // Token 0: scores (2, 0) / sqrt(2); token 1: scores (0, 0).
  const double e = std::exp(2.0 / std::sqrt(2.0));
  const double w0 = e / (e + 1), w1 = 1 / (e + 1);
  CHECK(y.row(0)[0] == doctest::Approx(w0 * 1 + w1 * 2).epsilon(1e-6));
  CHECK(y.row(0)[1] == doctest::Approx(w0 * 3 + w1 * 4).epsilon(1e-6));
  CHECK(y.row(1)[0] == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(y.row(1)[1] == doctest::Approx(3.5).epsilon(1e-6));
}

TEST_CASE("attention rows are distributions") {
  Rng rng(6);
  const std::size_t d = 16;
  const auto x = random_tokens(30, d, rng, 2.0);
  AttentionTrace trace;
  multi_head_attention(x, random_linear(3 * d, d, rng, 1.0), random_linear(d, d, rng, 0.3), 4, &trace);
  REQUIRE(trace.heads.size() == 4);
  for (const auto& h : trace.heads)
    for (std::size_t i = 0; i < 30; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 30; ++j) {
        CHECK(h[i * 30 + j] >= 0.0);
        s += h[i * 30 + j];
      }
      CHECK(std::abs(s - 1) < 1e-5);
    }
}

TEST_CASE("transformer_block identities and straight-line oracle") {
  const auto cfg = tiny();
  Rng rng(7);
  const auto x = random_tokens(9, 32, rng);

  const auto zero = zero_encoder(cfg).blocks[0];
  CHECK(transformer_block(x, zero, 4).data == x.data);

  auto ls0 = random_encoder(cfg, 3).blocks[0];
  ls0.ls1 = std::vector<float>(32, 0.0f);
  ls0.ls2 = std::vector<float>(32, 0.0f);
  CHECK(transformer_block(x, ls0, 4).data == x.data);

  for (bool with_ls : {false, true}) {
    auto b = random_encoder(cfg, 11).blocks[1];
    for (auto& v : b.ln1.gamma) v = static_cast<float>(1 + 0.2 * standard_normal(rng));
    for (auto& v : b.ln2.beta) v = static_cast<float>(0.1 * standard_normal(rng));
    if (with_ls) {
      b.ls1 = std::vector<float>(32);
      b.ls2 = std::vector<float>(32);
      for (auto& v : *b.ls1) v = static_cast<float>(0.5 * uniform01(rng));
      for (auto& v : *b.ls2) v = static_cast<float>(0.5 * uniform01(rng));
    }
    const auto got = transformer_block(x, b, 4);
    const auto want = nk_oracle::block(nk_oracle::to_mat(x), b, 4, 1e-6);
    double worst = 0;
    for (std::size_t n = 0; n < 9; ++n)
      for (std::size_t k = 0; k < 32; ++k) worst = std::max(worst, std::abs(got.row(n)[k] - want[n][k]));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("encoder_forward with zero weights") {
  const auto cfg = tiny(56, 4);
  auto p = zero_encoder(cfg);
  Rng rng(8);
  for (auto& v : p.cls_token) v = static_cast<float>(standard_normal(rng));
  std::vector<float> shared(32);
  for (auto& v : shared) v = static_cast<float>(standard_normal(rng));
  for (std::size_t k = 0; k < 32; ++k) p.pos_embed.data[k] = static_cast<float>(0.5 * k);
  for (std::size_t n = 1; n < p.pos_embed.count; ++n) std::copy(shared.begin(), shared.end(), p.pos_embed.row(n).begin());

  const auto out = encoder_forward(random_image(56, 9), p);
  Tokens cls(1, 32);
  for (std::size_t k = 0; k < 32; ++k) cls.data[k] = p.cls_token[k] + p.pos_embed.data[k];
  const auto expect = layer_norm(cls, p.norm.gamma, p.norm.beta);
  for (std::size_t k = 0; k < 32; ++k) CHECK(out.cls[k] == doctest::Approx(expect.data[k]).epsilon(1e-6));

  // All patch tokens identical, so GAP equals any one of them.
  CHECK(out.patch_tokens.count == 16);
  for (std::size_t k = 0; k < 32; ++k) CHECK(out.gap[k] == doctest::Approx(out.patch_tokens.row(5)[k]).epsilon(1e-6));
}

TEST_CASE("encoder permutation equivariance at depth 1") {
  auto cfg = tiny(56, 4);
  cfg.depth = 1;
  const auto p = random_encoder(cfg, 12);
  const auto img = random_image(56, 13);
  const std::size_t g = 4, ps = 14, s = 56;
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(14);
  shuffle(perm, rng);

  // New patch j shows old patch perm[j]; positional row j+1 becomes old row perm[j]+1.
  std::vector<float> img2(img.size());
  for (std::size_t j = 0; j < 16; ++j) {
    const std::size_t sy = perm[j] / g, sx = perm[j] % g, dy = j / g, dx = j % g;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < ps; ++r)
        for (std::size_t col = 0; col < ps; ++col)
          img2[(c * s + dy * ps + r) * s + dx * ps + col] = img[(c * s + sy * ps + r) * s + sx * ps + col];
  }
  auto p2 = p;
  for (std::size_t j = 0; j < 16; ++j) {
    const auto src = p.pos_embed.row(perm[j] + 1);
    std::copy(src.begin(), src.end(), p2.pos_embed.row(j + 1).begin());
  }
  const auto a = encoder_forward(img, p);
  const auto b = encoder_forward(img2, p2);
  double worst = 0;
  for (std::size_t k = 0; k < 32; ++k) {
    worst = std::max(worst, static_cast<double>(std::abs(a.cls[k] - b.cls[k])));
    worst = std::max(worst, static_cast<double>(std::abs(a.gap[k] - b.gap[k])));
  }
  for (std::size_t j = 0; j < 16; ++j)
    for (std::size_t k = 0; k < 32; ++k)
      worst = std::max(worst, static_cast<double>(std::abs(b.patch_tokens.row(j)[k] - a.patch_tokens.row(perm[j])[k])));
  CHECK(worst < 1e-5);
}

TEST_CASE("encoder_forward is deterministic and independent of worker count") {
  const auto p = random_encoder(tiny(), 15);
  const auto img = random_image(56, 16);
  const auto a = encoder_forward(img, p, 1);
  const auto b = encoder_forward(img, p, 1);
  const auto c = encoder_forward(img, p, 4);
  CHECK(a.cls == b.cls);
  CHECK(a.gap == b.gap);
  CHECK(a.patch_tokens.data == b.patch_tokens.data);
  CHECK(a.cls == c.cls);
  CHECK(a.patch_tokens.data == c.patch_tokens.data);
  for (float v : a.cls) CHECK(std::isfinite(v));
  NK_CHECK_ERROR(encoder_forward(random_image(28, 1), p), kShapeMismatch);
}

TEST_CASE("pixel standardization from the config") {
  auto cfg = tiny();
  cfg.pixel_mean = std::array<double, 3>{0.5, 0.5, 0.5};
  cfg.pixel_std = std::array<double, 3>{0.25, 0.25, 0.25};
  auto p = random_encoder(cfg, 1);
  const auto img = random_image(56, 2);
  std::vector<float> pre(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) pre[i] = static_cast<float>((img[i] - 0.5) / 0.25);
  auto plain = p;
  plain.config.pixel_mean.reset();
  plain.config.pixel_std.reset();
  CHECK(encoder_forward(img, p).cls == encoder_forward(pre, plain).cls);
}

TEST_CASE("NSTA archive byte layout and round trip") {
  TensorArchive a;
  a.metadata = R"({"k":1})";
  a.add("w", {{2, 3}, {1, 2, 3, 4, 5, 6}});
  a.add("b", {{2}, {-0.5f, 0.25f}});
  const auto bytes = save_tensor_archive(a);
  CHECK(std::memcmp(bytes.data(), "NSTA", 4) == 0);
  ByteReader r(bytes, ErrorCode::kCorruptArchive);
  r.get_string(4);
  CHECK(r.get<std::uint32_t>() == 1);
  CHECK(r.get<std::uint32_t>() == 7);
  CHECK(r.get_string(7) == a.metadata);
  CHECK(r.get<std::uint32_t>() == 2);
  CHECK(r.get<std::uint32_t>() == 1);
  CHECK(r.get_string(1) == "w");
  CHECK(r.get<std::uint8_t>() == 1);
  CHECK(r.get<std::uint8_t>() == 2);
  CHECK(r.get<std::uint64_t>() == 2);
  CHECK(r.get<std::uint64_t>() == 3);
  CHECK(r.get<float>() == 1.0f);
  // 4 + 4 + 4 + 7 + 4 + (4 + 1 + 1 + 1 + 16 + 24) + (4 + 1 + 1 + 1 + 8 + 8)
  CHECK(bytes.size() == 23u + 47u + 23u);

  const auto back = load_tensor_archive(bytes);
  CHECK(back.metadata == a.metadata);
  CHECK(back.get("w").data == a.get("w").data);
  CHECK(back.get("b").dims == std::vector<std::uint64_t>{2});
  CHECK(save_tensor_archive(back) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  NK_CHECK_ERROR(load_tensor_archive(bad), kBadMagic);
  auto ver = bytes;
  ver[4] = 2;
  NK_CHECK_ERROR(load_tensor_archive(ver), kUnsupportedVersion);
  auto trunc = bytes;
  trunc.pop_back();
  NK_CHECK_ERROR(load_tensor_archive(trunc), kCorruptArchive);
  auto extra = bytes;
  extra.push_back(0);
  NK_CHECK_ERROR(load_tensor_archive(extra), kCorruptArchive);
  NK_CHECK_ERROR(back.get("nope"), kMissingTensor);
}

TEST_CASE("encoder archive: round trip, missing tensors and shape checks") {
  const auto p = random_encoder(tiny(), 21);
  auto arch = encoder_to_archive(p);
  const auto bytes = save_tensor_archive(arch);
  const auto q = encoder_from_archive(load_tensor_archive(bytes));
  CHECK(q.patch_embed.weight == p.patch_embed.weight);
  CHECK(q.blocks[1].fc2.weight == p.blocks[1].fc2.weight);
  CHECK(q.pos_embed.data == p.pos_embed.data);
  CHECK(save_tensor_archive(encoder_to_archive(q)) == bytes);

  TensorArchive no_cls;
  no_cls.metadata = arch.metadata;
  for (const auto& [name, t] : arch.entries())
    if (name != "cls_token") no_cls.add(name, t);
  try {
    encoder_from_archive(no_cls);
    FAIL("expected MissingTensor");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingTensor);
    CHECK(std::string(e.what()).find("cls_token") != std::string::npos);
  }

  TensorArchive wrong;
  wrong.metadata = arch.metadata;
  for (const auto& [name, t] : arch.entries()) {
    if (name == "norm.bias") wrong.add(name, {{31}, std::vector<float>(31)});
    else wrong.add(name, t);
  }
  NK_CHECK_ERROR(encoder_from_archive(wrong), kShapeMismatch);

  nk_test::TempDir dir;
  write_tensor_archive(arch, dir / "e.nsta");
  const auto loaded = encoder_from_archive(read_tensor_archive(dir / "e.nsta"));
  CHECK(encoder_forward(random_image(56, 1), loaded).cls == encoder_forward(random_image(56, 1), p).cls);
}

TEST_CASE("config validation") {
  auto c = tiny();
  c.image_size = 50;
  NK_CHECK_ERROR(c.validate(), kNonDivisibleInput);
  c = tiny();
  c.num_heads = 5;
  NK_CHECK_ERROR(c.validate(), kInvalidArgument);
  c = tiny();
  c.depth = 0;
  NK_CHECK_ERROR(c.validate(), kInvalidArgument);
  const auto j = to_json(tiny());
  CHECK(config_from_json(j).embed_dim == 32);
}

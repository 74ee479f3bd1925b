// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "classifiers/decision_tree.hpp"
#include "classifiers/knn.hpp"
#include "classifiers/random_forest.hpp"
#include "common/binary_io.hpp"
#include "common/log.hpp"
#include "common/random.hpp"
#include "ct_io/ct_volume.hpp"
#include "ct_io/metaimage.hpp"
#include "gradcheck.hpp"
#include "heads/losses.hpp"
#include "metrics/metrics.hpp"
#include "oracles.hpp"
#include "patching/patching.hpp"
#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"
#include "pipeline/synth.hpp"
#include "test_support.hpp"
#include "vit/encoder.hpp"
#include "vit/tensor_archive.hpp"

using namespace nodulekit;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s;  // 0 = no time limit of its own
  std::function<Outcome()> run;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<float> random_image(std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> img(3 * s * s);
  for (auto& v : img) v = static_cast<float>(uniform01(rng));
  return img;
}

vit::EncoderConfig tiny(std::size_t image_size, std::size_t grid) {
  vit::EncoderConfig c;
  c.image_size = image_size;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_heads = 4;
  c.pretrain_grid = grid;
  return c;
}

Outcome token_count() {
  auto cfg = tiny(504, 36);
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.num_heads = 2;
  const auto params = vit::random_encoder(cfg, 1);
  const auto img = random_image(504, 2);
  const auto patches = vit::patchify(img, 504, 14);
  const auto out = vit::encoder_forward(img, params, 0);
  const std::size_t tokens = out.patch_tokens.count + 1;
  return {patches.count == 1296 && tokens == 1297,
          std::to_string(patches.count) + " patches, " + std::to_string(tokens) + " tokens"};
}

Outcome encoder_invariants() {
  Rng rng(3);
  // Attention rows.
  vit::Tokens x(17, 32);
  for (auto& v : x.data) v = static_cast<float>(standard_normal(rng));
  const auto p = vit::random_encoder(tiny(56, 4), 4);
  vit::AttentionTrace trace;
  vit::multi_head_attention(x, p.blocks[0].qkv, p.blocks[0].proj, 4, &trace);
  double row_err = 0;
  for (const auto& h : trace.heads)
    for (std::size_t i = 0; i < 17; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 17; ++j) s += h[i * 17 + j];
      row_err = std::max(row_err, std::abs(s - 1));
    }

  // LayerNorm statistics before the affine part.
  for (auto& v : x.data) v = static_cast<float>(50 + 20 * standard_normal(rng));
  const auto n = vit::layer_norm(x, std::vector<float>(32, 1.0f), std::vector<float>(32, 0.0f));
  double mean_err = 0, var_err = 0;
  for (std::size_t t = 0; t < n.count; ++t) {
    double m = 0, v = 0;
    for (float f : n.row(t)) m += f;
    m /= 32;
    for (float f : n.row(t)) v += (f - m) * (f - m);
    v /= 32;
    mean_err = std::max(mean_err, std::abs(m));
    var_err = std::max(var_err, std::abs(v - 1));
  }

  // Zero-weight block with zero layer scale is the identity.
  auto zb = vit::zero_encoder(tiny(56, 4)).blocks[0];
  zb.ls1 = std::vector<float>(32, 0.0f);
  zb.ls2 = std::vector<float>(32, 0.0f);
  const auto y = vit::transformer_block(x, zb, 4);
  const bool identity = y.data == x.data;

  // Permutation equivariance at depth 1.
  auto cfg = tiny(56, 4);
  cfg.depth = 1;
  const auto enc = vit::random_encoder(cfg, 5);
  const auto img = random_image(56, 6);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  std::vector<float> img2(img.size());
  for (std::size_t j = 0; j < 16; ++j) {
    const std::size_t sy = perm[j] / 4, sx = perm[j] % 4, dy = j / 4, dx = j % 4;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t r = 0; r < 14; ++r)
        for (std::size_t k = 0; k < 14; ++k)
          img2[(c * 56 + dy * 14 + r) * 56 + dx * 14 + k] = img[(c * 56 + sy * 14 + r) * 56 + sx * 14 + k];
  }
  auto enc2 = enc;
  for (std::size_t j = 0; j < 16; ++j) {
    const auto src = enc.pos_embed.row(perm[j] + 1);
    std::copy(src.begin(), src.end(), enc2.pos_embed.row(j + 1).begin());
  }
  const auto a = vit::encoder_forward(img, enc);
  const auto b = vit::encoder_forward(img2, enc2);
  double perm_err = 0;
  for (std::size_t k = 0; k < 32; ++k) perm_err = std::max(perm_err, static_cast<double>(std::abs(a.cls[k] - b.cls[k])));
  for (std::size_t j = 0; j < 16; ++j)
    for (std::size_t k = 0; k < 32; ++k)
      perm_err = std::max(perm_err,
                          static_cast<double>(std::abs(b.patch_tokens.row(j)[k] - a.patch_tokens.row(perm[j])[k])));

  const bool ok = row_err < 1e-5 && mean_err < 1e-6 && var_err < 1e-4 && identity && perm_err < 1e-5;
  return {ok, "row sum err " + num(row_err) + ", ln |mean| " + num(mean_err) + ", ln |var-1| " + num(var_err) +
                  ", identity " + (identity ? "yes" : "no") + ", permutation err " + num(perm_err)};
}

Outcome gradient_oracle() {
  double worst = 0;
  std::size_t probes = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto r = nk_oracle::gradient_check(seed);
    worst = std::max(worst, r.max_rel_error);
    probes += r.parameters;
  }
  return {worst < 1e-4, "max relative error " + num(worst) + " over " + std::to_string(probes) + " parameters"};
}

Outcome loss_reductions() {
  using V = std::vector<double>;
  bool bit_exact = true;
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double a = 1e-6 + (1 - 2e-6) * uniform01(rng);
    const V t = i % 2 ? V{1, 0} : V{0, 1};
    const V s = {a, 1 - a};
    const double x = heads::sce_loss(t, s, {1.0, 0.0, -4.0});
    const double y = heads::ce_loss(t, s);
    bit_exact = bit_exact && std::memcmp(&x, &y, sizeof x) == 0;
  }
  const double zero = heads::ce_loss(V{0, 1}, V{0, 1});
  const double example = heads::sce_loss(V{1, 0}, V{0.8, 0.2}, {1.0, 0.5, -4.0});
  const bool ok = bit_exact && zero == 0.0 && std::abs(example - 0.62314) <= 1e-5;
  return {ok, std::string("sce(1,0)==ce ") + (bit_exact ? "bit-exact" : "differs") + ", ce(one-hot) " + num(zero) +
                  ", example " + std::to_string(example)};
}

Outcome table2_f1() {
  const double dt = metrics::f1_from(0.6621, 0.5439);
  const double knn = metrics::f1_from(0.9964, 0.7932);
  const double rf = metrics::f1_from(0.9964, 0.9348);
  const bool ok = std::abs(dt - 0.5972) <= 0.002 && std::abs(knn - 0.8833) <= 0.002;
  char buf[200];
  std::snprintf(buf, sizeof buf, "DT %.2f (published 59.72), KNN %.2f (88.33); RF %.2f vs published 96.63, not matched",
                100 * dt, 100 * knn, 100 * rf);
  return {ok, buf};
}

Outcome auc_oracle() {
  Rng rng(8);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 300);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 2 ? std::round(uniform01(rng) * 8) / 8 : uniform01(rng);
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(metrics::roc_auc(s, y).auc - nk_oracle::concordance(s, y)));
  }
  const double ex = metrics::roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}).auc;
  return {worst < 1e-9 && ex == 0.75, "max |trapezoid - concordance| " + num(worst) + ", example " + num(ex)};
}

Outcome classifier_oracles() {
  Rng rng(9);
  auto random_data = [&](std::size_t n, std::size_t d) {
    ml::Dataset data;
    data.dim = d;
    std::vector<float> x(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : x) v = static_cast<float>(standard_normal(rng));
      data.add(x, static_cast<int>(uniform_index(rng, 2)));
    }
    return data;
  };
  auto query = [&](std::size_t d) {
    std::vector<float> q(d);
    for (auto& v : q) v = static_cast<float>(2 * standard_normal(rng));
    return q;
  };

  const auto d = random_data(150, 5);
  ml::ForestConfig fc;
  fc.n_trees = 1;
  fc.bootstrap = false;
  fc.features_per_split = 5;
  const auto forest = ml::fit_random_forest(d, fc);
  const auto tree = ml::fit_decision_tree(d, {});
  std::size_t rf_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto q = query(5);
    const auto a = ml::predict_forest(forest, q);
    const auto b = ml::predict_tree(tree, q);
    rf_mismatch += a.label != b.label || a.score != b.score;
  }

  const auto k = random_data(100, 3);
  const auto knn = ml::fit_knn(k, 7);
  std::size_t knn_mismatch = 0;
  for (int i = 0; i < 50; ++i) {
    const auto q = query(3);
    knn_mismatch += ml::knn_predict(knn, q).score != nk_oracle::knn_score(k, q, 7);
  }

  std::size_t split_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_data(2 + uniform_index(rng, 99), 1 + uniform_index(rng, 5));
    std::vector<std::size_t> idx(s.size()), feats(s.dim);
    std::iota(idx.begin(), idx.end(), 0);
    std::iota(feats.begin(), feats.end(), 0);
    const auto got = ml::best_split(s, idx, feats);
    const auto want = nk_oracle::exhaustive_split(s);
    if (got.has_value() != want.has_value()) {
      ++split_mismatch;
    } else if (got && (got->feature != want->feature || got->threshold != want->threshold)) {
      ++split_mismatch;
    }
  }
  return {rf_mismatch == 0 && knn_mismatch == 0 && split_mismatch == 0,
          "RF/DT mismatches " + std::to_string(rf_mismatch) + "/1000, KNN " + std::to_string(knn_mismatch) +
              "/50, splits " + std::to_string(split_mismatch) + "/200"};
}

Outcome geometry_formats(const nk_test::TempDir& dir) {
  Rng rng(10);
  // World/voxel round trips with random orthonormal directions.
  double worst_rt = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ct::Mat3 m{};
    const double a = 2 * std::numbers::pi * uniform01(rng), b = 2 * std::numbers::pi * uniform01(rng);
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    // Rz(a) * Rx(b)
    m = {ca, -sa * cb, sa * sb, sa, ca * cb, -ca * sb, 0, sb, cb};
    const ct::CtVolume v({4, 4, 4}, {0.5 + uniform01(rng), 0.5 + uniform01(rng), 1 + 2 * uniform01(rng)},
                         {100 * standard_normal(rng), 100 * standard_normal(rng), 100 * standard_normal(rng)}, m,
                         std::vector<float>(64, 0.0f));
    const ct::Vec3 w = {200 * standard_normal(rng), 200 * standard_normal(rng), 200 * standard_normal(rng)};
    const auto back = ct::voxel_to_world(v, ct::world_to_voxel(v, w));
    for (int k = 0; k < 3; ++k) worst_rt = std::max(worst_rt, std::abs(back[k] - w[k]));
  }

  // MetaImage round trip.
  std::vector<float> vals(6 * 5 * 4);
  for (auto& x : vals) x = static_cast<float>(std::round(2000 * uniform01(rng) - 1000));
  const ct::CtVolume vol({6, 5, 4}, {0.7, 0.7, 2.5}, {-10, 20, -300}, ct::kIdentity, vals, ct::ElementType::kShort);
  ct::write_metaimage(vol, dir / "rt.mhd");
  const auto re = ct::read_metaimage(dir / "rt.mhd");
  const bool mhd_ok = re.voxels() == vol.voxels() && re.spacing() == vol.spacing() && re.origin() == vol.origin();

  // NSTA round trip.
  const auto enc = vit::random_encoder(tiny(56, 4), 11);
  const auto bytes = vit::save_tensor_archive(vit::encoder_to_archive(enc));
  const auto bytes2 = vit::save_tensor_archive(vit::load_tensor_archive(bytes));
  const bool nsta_ok = bytes == bytes2;

  // Mid-slice equals the z_c plane of the window.
  std::size_t slice_bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const ct::Dims d{4 + uniform_index(rng, 20), 4 + uniform_index(rng, 20), 4 + uniform_index(rng, 20)};
    std::vector<float> v(d.count());
    for (auto& x : v) x = static_cast<float>(standard_normal(rng));
    const ct::CtVolume cv(d, {1, 1, 1}, {0, 0, 0}, ct::kIdentity, v);
    const std::size_t w = 1 + uniform_index(rng, std::min({d.nx, d.ny, d.nz}));
    const patch::VoxelIndex c = {static_cast<long long>(uniform_index(rng, d.nx)),
                                 static_cast<long long>(uniform_index(rng, d.ny)),
                                 static_cast<long long>(uniform_index(rng, d.nz))};
    const auto win = patch::extract_window(cv, c, w);
    const auto s = patch::extract_mid_slice(cv, c, w);
    const auto kz = static_cast<std::size_t>(c[2] - win.start[2]);
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t i = 0; i < w; ++i) slice_bad += s.at(j, i) != win.at(i, j, kz);
  }

  return {worst_rt < 1e-6 && mhd_ok && nsta_ok && slice_bad == 0,
          "round trip err " + num(worst_rt) + " mm, MetaImage " + (mhd_ok ? "exact" : "differs") + ", NSTA " +
              (nsta_ok ? "exact" : "differs") + ", mid-slice mismatches " + std::to_string(slice_bad)};
}

json e2e_config(const std::filesystem::path& data, const std::filesystem::path& out) {
  return {{"scans_dir", (data / "scans").string()},
          {"annotations", (data / "annotations.csv").string()},
          {"candidates", (data / "candidates.csv").string()},
          {"out_dir", out.string()},
          {"window", 32},
          {"image_size", 56},
          {"seed", 42},
          {"lr", 0.01},
          {"head_features", "cls"},
          {"classifier_features", "gap"},
          {"standardize_features", true},
          {"encoder_embed_dim", 32},
          {"encoder_depth", 2},
          {"encoder_heads", 4},
          {"encoder_patch_size", 14},
          {"log_level", "warn"}};
}

json run_pipeline(const std::filesystem::path& data, const std::filesystem::path& out) {
  auto cfg = [&](json extra) {
    json j = e2e_config(data, out);
    j.update(extra);
    return pipeline::config_from_json(j);
  };
  pipeline::run_command("init-encoder", cfg(json::object()));
  pipeline::run_command("preprocess", cfg(json::object()));
  pipeline::run_command("featurize", cfg(json::object()));
  pipeline::run_command("train-heads", cfg(json::object()));
  pipeline::run_command("train-classifier", cfg({{"classifier", "rf"}}));
  json result;
  result["heads"] = pipeline::run_command("evaluate", cfg({{"model", "heads"}})).summary;
  result["rf"] = pipeline::run_command("evaluate", cfg({{"model", "rf"}})).summary;
  return result;
}

struct E2eState {
  bool ran = false;
  json first;
  std::string error;
};

Outcome end_to_end(const nk_test::TempDir& dir, E2eState& state) {
  pipeline::SynthOptions o;
  o.scans = 20;
  o.positives_per_scan = 5;
  o.negatives_per_scan = 10;
  o.size = 64;
  o.window = 32;
  o.seed = 42;
  const auto corpus = pipeline::generate_synthetic_corpus(dir / "data", o);
  state.first = run_pipeline(dir / "data", dir / "run1");
  state.ran = true;
  const auto& h = state.first["heads"];
  const auto& r = state.first["rf"];
  const double h_acc = h["accuracy"].get<double>();
  const double h_auc = h["auc"].is_null() ? 0.0 : h["auc"].get<double>();
  const double r_acc = r["accuracy"].get<double>();
  const auto meta = json::parse(read_file_text(dir / "run1" / "patches" / "meta.json"));
  std::size_t samples = 0;
  for (const auto& [k, v] : meta["partitions"].items()) samples += v["samples"].get<std::size_t>();
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu samples (%zu test); heads acc %.4f auc %.4f; RF(gap) acc %.4f", samples,
                h["n"].get<std::size_t>(), h_acc, h_auc, r_acc);
  return {h_acc >= 0.95 && h_auc >= 0.98 && r_acc >= 0.95, buf};
}

Outcome determinism(const nk_test::TempDir& dir, E2eState& state) {
  if (!state.ran) return {false, "end-to-end run did not complete"};
  run_pipeline(dir / "data", dir / "run2");
  bool same = true;
  std::string which;
  for (const char* f : {"heads_test_metrics.json", "rf_test_metrics.json", "heads_test_roc.csv", "rf_test_roc.csv"}) {
    const bool eq = read_file_bytes(dir / "run1" / "eval" / f) == read_file_bytes(dir / "run2" / "eval" / f);
    same = same && eq;
    if (!eq) which += std::string(" ") + f;
  }
  const bool heads_eq = read_file_bytes(dir / "run1" / "heads.nsta") == read_file_bytes(dir / "run2" / "heads.nsta");
  return {same && heads_eq, same && heads_eq ? "metrics JSON, ROC CSV and head archive byte-identical across two runs"
                                             : "differs:" + which + (heads_eq ? "" : " heads.nsta")};
}

}  // namespace

int main() {
  set_log_level(spdlog::level::warn);
  nk_test::TempDir dir;
  E2eState e2e;

  const std::vector<Criterion> criteria = {
      {"token-count", 1.0, token_count},
      {"encoder-invariants", 10.0, encoder_invariants},
      {"gradient-oracle", 30.0, gradient_oracle},
      {"loss-reductions", 0, loss_reductions},
      {"table2-f1-consistency", 0, table2_f1},
      {"auc-oracle", 0, auc_oracle},
      {"classifier-oracles", 0, classifier_oracles},
      {"geometry-formats", 0, [&] { return geometry_formats(dir); }},
      {"end-to-end-synthetic", 300.0, [&] { return end_to_end(dir, e2e); }},
      {"determinism", 0, [&] { return determinism(dir, e2e); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + num(c.budget_s) + " s budget";
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %-24s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

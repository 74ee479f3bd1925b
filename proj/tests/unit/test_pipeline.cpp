#include <cmath>
#include <cstdio>

#include "common/binary_io.hpp"
#include "ct_io/luna_csv.hpp"
#include "ct_io/metaimage.hpp"
#include "doctest.h"
#include "pipeline/artifacts.hpp"
#include "pipeline/config.hpp"
#include "pipeline/overlay.hpp"
#include "pipeline/pipeline.hpp"
#include "test_support.hpp"
#include "vit/encoder.hpp"
#include "vit/tensor_archive.hpp"

using namespace nodulekit;
using namespace nodulekit::pipeline;
using nlohmann::json;

namespace {

ct::CtVolume blob_volume(std::size_t n, const std::vector<ct::Vec3>& centers) {
  std::vector<float> v(n * n * n, -800.0f);
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double hu = -800.0;
        for (const auto& c : centers) {
          const double r2 = std::pow(x - c[0], 2) + std::pow(y - c[1], 2) + std::pow(z - c[2], 2);
          hu += 900.0 * std::exp(-r2 / 8.0);
        }
        v[(z * n + y) * n + x] = static_cast<float>(hu);
      }
  return ct::CtVolume({n, n, n}, {1, 1, 1}, {0, 0, 0}, ct::kIdentity, std::move(v), ct::ElementType::kShort);
}

/// Two 48^3 scans with three nodules between them and ten far negatives.
struct Fixture {
  nk_test::TempDir dir;
  json config;

  Fixture() {
    const auto scans = dir / "scans";
    std::filesystem::create_directories(scans);
    ct::write_metaimage(blob_volume(48, {{16, 16, 24}, {32, 30, 24}}), scans / "scan_a.mhd");
    ct::write_metaimage(blob_volume(48, {{24, 24, 20}}), scans / "scan_b.mhd");
    std::vector<ct::NoduleAnnotation> ann = {
        {"scan_a", {16, 16, 24}, 5}, {"scan_a", {32, 30, 24}, 5}, {"scan_b", {24, 24, 20}, 5}};
    std::vector<ct::Candidate> cand;
    for (const auto& a : ann) cand.push_back({a.scan_id, a.world_center, 1});
    for (int i = 0; i < 5; ++i) {
      cand.push_back({"scan_a", {40, 8.0 + i, 40}, 0});
      cand.push_back({"scan_b", {8, 40, 8.0 + i}, 0});
    }
    write_file_text(dir / "annotations.csv", ct::write_annotations_csv(ann));
    write_file_text(dir / "candidates.csv", ct::write_candidates_csv(cand));
    config = {{"scans_dir", scans.string()},
              {"annotations", (dir / "annotations.csv").string()},
              {"candidates", (dir / "candidates.csv").string()},
              {"out_dir", (dir / "out").string()},
              {"window", 16},
              {"image_size", 28},
              {"epochs", 5},
              {"log_level", "warn"}};
  }

  PipelineConfig cfg(json extra = json::object()) const {
    json j = config;
    j.update(extra);
    return config_from_json(j);
  }

  void write_encoder(std::uint64_t seed = 3) const {
    vit::EncoderConfig ec;
    ec.image_size = 28;
    ec.embed_dim = 32;
    ec.depth = 1;
    ec.num_heads = 4;
    ec.pretrain_grid = 2;
    vit::write_tensor_archive(vit::encoder_to_archive(vit::random_encoder(ec, seed)), dir / "out" / "encoder.nsta");
  }

  std::size_t manifest_rows() const {
    std::size_t rows = 0;
    for (const auto& p : kPartitions) {
      rows += patch::parse_manifest(read_file_text(dir / "out" / "patches" / (p + ".csv"))).size();
    }
    return rows;
  }
};

}  // namespace

TEST_CASE("config parsing and hashing") {
  const auto d = config_from_json(json::object());
  CHECK(d.window == 64);
  CHECK(d.image_size == 504);
  CHECK(d.train.lr == 1e-4);
  CHECK(d.raw.at("log_level") == "info");
  NK_CHECK_ERROR(config_from_json(json{{"windw", 3}}), kInvalidArgument);
  NK_CHECK_ERROR(config_from_json(json{{"window", "big"}}), kInvalidArgument);
  NK_CHECK_ERROR(config_from_json(json{{"head_features", "mean"}}), kInvalidArgument);

  const auto h = config_hash(d);
  CHECK(h.size() == 64);
  CHECK(config_hash(config_from_json(json::object())) == h);
  // Paths and selectors do not shape artifacts.
  CHECK(config_hash(config_from_json(json{{"out_dir", "/elsewhere"}, {"model", "rf"}, {"threads", 3}})) == h);
  CHECK(config_hash(config_from_json(json{{"lr", 0.5}})) != h);
  CHECK(config_hash(config_from_json(json{{"window", 32}})) != h);

  std::size_t hashed = 0;
  const auto schema = config_schema();
  for (const auto& k : schema["keys"]) hashed += k["hashed"].get<bool>();
  CHECK(hashed > 20);
}

TEST_CASE("preprocess writes the expected manifests and is repeatable") {
  Fixture f;
  const auto r = cmd_preprocess(f.cfg());
  CHECK(r.summary["positives"] == 3);
  CHECK(r.summary["negatives"] == 3);
  CHECK(f.manifest_rows() == 6);
  const auto first = read_file_bytes(f.dir / "out" / "patches" / "train.csv");
  const auto first_bin = read_file_bytes(f.dir / "out" / "patches" / "train.bin");
  const auto split_doc = read_file_text(f.dir / "out" / "split.json");
  cmd_preprocess(f.cfg());
  CHECK(read_file_bytes(f.dir / "out" / "patches" / "train.csv") == first);
  CHECK(read_file_bytes(f.dir / "out" / "patches" / "train.bin") == first_bin);
  CHECK(read_file_text(f.dir / "out" / "split.json") == split_doc);

  write_file_text(f.dir / "empty.csv", "");
  NK_CHECK_ERROR(cmd_preprocess(f.cfg({{"candidates", (f.dir / "empty.csv").string()}})), kEmptyInput);
  NK_CHECK_ERROR(cmd_preprocess(f.cfg({{"annotations", (f.dir / "nope.csv").string()}})), kMissingArtifact);
}

TEST_CASE("featurize, train, evaluate and stamp checks") {
  Fixture f;
  const auto cfg = f.cfg();
  NK_CHECK_ERROR(cmd_featurize(cfg), kMissingArtifact);
  cmd_preprocess(cfg);
  NK_CHECK_ERROR(cmd_featurize(cfg), kMissingArtifact);
  f.write_encoder();
  cmd_featurize(cfg);

  const Layout layout{f.dir / "out"};
  std::size_t total = 0;
  for (const auto& p : kPartitions) {
    const auto t = load_features(layout, p, cfg);
    CHECK(t.dim == 32);
    CHECK(t.cls.size() == t.size() * 32);
    CHECK(t.gap.size() == t.size() * 32);
    total += t.size();
  }
  CHECK(total == 6);

  const auto cls_bytes = read_file_bytes(layout.features_dir() / "train.cls.f32");
  const auto gap_bytes = read_file_bytes(layout.features_dir() / "train.gap.f32");
  cmd_featurize(f.cfg({{"threads", 1}}));
  CHECK(read_file_bytes(layout.features_dir() / "train.cls.f32") == cls_bytes);
  CHECK(read_file_bytes(layout.features_dir() / "train.gap.f32") == gap_bytes);

  const auto train_rows = load_features(layout, "train", cfg).size();
  if (train_rows > 0) {
    cmd_train_heads(cfg);
    CHECK(std::filesystem::exists(layout.heads()));
    CHECK(read_file_text(layout.history()).rfind("epoch,", 0) == 0);
    // Any hashed key change invalidates the artifacts downstream.
    NK_CHECK_ERROR(cmd_evaluate(f.cfg({{"partition", "train"}, {"lr", 0.02}})), kVersionMismatch);
    NK_CHECK_ERROR(cmd_train_heads(f.cfg({{"sce_beta", 0.5}})), kVersionMismatch);
    NK_CHECK_ERROR(cmd_evaluate(f.cfg({{"partition", "train"}, {"model", "knn"}})), kMissingArtifact);
  }

  auto bytes = read_file_bytes(layout.encoder());
  bytes[0] = 'X';
  write_file_bytes(layout.encoder(), bytes);
  NK_CHECK_ERROR(cmd_featurize(cfg), kBadMagic);
}

TEST_CASE("predict with zero heads gives probability one half and a half-window box") {
  Fixture f;
  const auto cfg = f.cfg({{"scan", (f.dir / "scans" / "scan_a.mhd").string()}, {"center", "16,16,24"}});
  f.write_encoder();
  heads::ClassifierHead c(32);
  heads::DetectionHead d(32);
  json meta = artifact_stamp(cfg);
  meta["feature"] = "cls";
  vit::write_tensor_archive(heads::heads_to_archive(c, d, meta), f.dir / "out" / "heads.nsta");

  const auto r = cmd_predict(cfg);
  CHECK(r.summary["probability"].get<double>() == 0.5);
  CHECK(r.summary["label"] == 1);
  CHECK(r.summary["box_size_mm"][0].get<double>() == doctest::Approx(8.0));
  CHECK(r.summary["box_size_mm"][1].get<double>() == doctest::Approx(8.0));
  // The box is centered on the window center voxel, which is the requested point.
  CHECK(r.summary["box_center_mm"][0].get<double>() == doctest::Approx(16.0));
  CHECK(r.summary["box_center_mm"][1].get<double>() == doctest::Approx(16.0));
  CHECK(r.summary["box_center_mm"][2].get<double>() == doctest::Approx(24.0));
  CHECK(r.stdout_text.rfind("scan=scan_a label=1 probability=0.500000 box_center_mm=(16.000,16.000,24.000) "
                            "box_size_mm=(8.000,8.000) ",
                            0) == 0);

  const auto overlay = f.dir / "overlay.svg";
  cmd_predict(f.cfg({{"scan", (f.dir / "scans" / "scan_a.mhd").string()},
                     {"center", "16,16,24"},
                     {"overlay", overlay.string()}}));
  CHECK(read_file_text(overlay).find("</svg>") != std::string::npos);

  NK_CHECK_ERROR(cmd_predict(f.cfg({{"scan", (f.dir / "scans" / "scan_a.mhd").string()}, {"center", "1,2"}})),
                 kInvalidArgument);
  NK_CHECK_ERROR(cmd_predict(f.cfg({{"scan", (f.dir / "scans" / "scan_a.mhd").string()},
                                    {"center", "16,16,24"},
                                    {"lr", 0.3}})),
                 kVersionMismatch);
}

TEST_CASE("place_box inverts the target encoding") {
  const ct::CtVolume vol({100, 100, 10}, {0.5, 0.75, 2.0}, {-10, 5, 0}, ct::kIdentity, std::vector<float>(100000, 0.0f));
  const patch::VoxelIndex start{20, 30, 0};
  const auto p = place_box(vol, start, 32, {0.5, 0.5, 0.25, 0.5}, 4);
  CHECK(p.center_mm[0] == doctest::Approx(-10 + 36 * 0.5));
  CHECK(p.center_mm[1] == doctest::Approx(5 + 46 * 0.75));
  CHECK(p.center_mm[2] == doctest::Approx(8.0));
  CHECK(p.size_mm[0] == doctest::Approx(8 * 0.5));
  CHECK(p.size_mm[1] == doctest::Approx(16 * 0.75));
  CHECK(p.x0 == 32.0);
  CHECK(p.x1 == 40.0);
  const auto shifted = place_box(vol, start, 32, {0.75, 0.25, 0.1, 0.1}, 4);
  CHECK(shifted.center_mm[0] == doctest::Approx(-10 + (36 + 8) * 0.5));
  CHECK(shifted.center_mm[1] == doctest::Approx(5 + (46 - 8) * 0.75));
}

TEST_CASE("unknown command") {
  NK_CHECK_ERROR(run_command("train", config_from_json(json::object())), kInvalidArgument);
}

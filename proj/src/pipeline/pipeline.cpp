#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "classifiers/decision_tree.hpp"
#include "classifiers/knn.hpp"
#include "classifiers/random_forest.hpp"
#include "common/binary_io.hpp"
#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/log.hpp"
#include "common/parallel.hpp"
#include "common/text.hpp"
#include "ct_io/dataset_split.hpp"
#include "ct_io/luna_csv.hpp"
#include "ct_io/metaimage.hpp"
#include "metrics/metrics.hpp"
#include "patching/patching.hpp"
#include "pipeline/artifacts.hpp"
#include "pipeline/overlay.hpp"
#include "vit/encoder.hpp"
#include "vit/tensor_archive.hpp"

namespace nodulekit::pipeline {

using nlohmann::json;

const char* tool_version() noexcept { return NODULEKIT_VERSION; }

json artifact_stamp(const PipelineConfig& config) {
  return {{"tool_version", tool_version()}, {"config_hash", config_hash(config)}, {"seed", config.seed}};
}

void check_stamp(const json& doc, const PipelineConfig& config, const std::string& what) {
  const std::string expected = config_hash(config);
  const std::string found = doc.contains("config_hash") && doc["config_hash"].is_string()
                                ? doc["config_hash"].get<std::string>()
                                : "";
  if (found != expected) {
    fail(ErrorCode::kVersionMismatch, what + " was produced with config hash " +
                                          (found.empty() ? std::string("<none>") : found.substr(0, 12)) +
                                          ", current config hashes to " + expected.substr(0, 12));
  }
}

namespace {

std::size_t workers_for(const PipelineConfig& c) { return c.threads == 0 ? default_workers() : c.threads; }

void require_file(const std::string& path, const char* key) {
  if (path.empty()) fail(ErrorCode::kInvalidArgument, std::string("missing required setting '") + key + "'");
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, std::string(key) + " not found: " + path);
}

std::map<std::string, fs::path> discover_scans(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kMissingArtifact, "scans_dir is not a directory: " + dir.string());
  std::map<std::string, fs::path> scans;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext != ".mhd" && ext != ".mha") continue;
    const auto id = entry.path().stem().string();
    const auto [it, inserted] = scans.emplace(id, entry.path());
    if (!inserted) {
      fail(ErrorCode::kInvalidArgument, "scan id " + id + " found twice: " + it->second.string() + " and " +
                                            entry.path().string());
    }
  }
  return scans;
}

bool same_candidate(const ct::Candidate& a, const ct::Candidate& b) {
  return a.scan_id == b.scan_id && a.world_center == b.world_center && a.label == b.label;
}

json partition_counts(const std::vector<patch::PatchSample>& samples) {
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.label == 1 ? 1 : 0;
  return {{"samples", samples.size()}, {"positives", pos}, {"negatives", samples.size() - pos}};
}

vit::EncoderParams load_encoder(const PipelineConfig& config, const Layout& layout, std::string* sha_out) {
  const fs::path path = config.encoder.empty() ? layout.encoder() : fs::path(config.encoder);
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, "encoder archive not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  if (sha_out != nullptr) *sha_out = sha256_hex(bytes);
  auto params = vit::encoder_from_archive(vit::load_tensor_archive(bytes));
  if (params.config.image_size != config.image_size) {
    fail(ErrorCode::kShapeMismatch, "encoder expects " + std::to_string(params.config.image_size) +
                                        " px input but image_size is " + std::to_string(config.image_size));
  }
  return params;
}

struct LoadedHeads {
  heads::ClassifierHead cls;
  heads::DetectionHead det;
  FeatureKind feature = FeatureKind::kCls;
  json metadata;
};

LoadedHeads load_heads(const PipelineConfig& config, const Layout& layout) {
  const fs::path path = config.heads.empty() ? layout.heads() : fs::path(config.heads);
  const auto archive = vit::read_tensor_archive(path);
  LoadedHeads h;
  try {
    h.metadata = json::parse(archive.metadata);
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorruptArchive, std::string("head archive metadata is not JSON: ") + e.what());
  }
  check_stamp(h.metadata, config, "head archive " + path.string());
  std::tie(h.cls, h.det) = heads::heads_from_archive(archive);
  h.feature = parse_feature_kind(h.metadata.value("feature", std::string("cls")));
  return h;
}

}  // namespace

CommandResult cmd_preprocess(const PipelineConfig& config) {
  require_file(config.annotations, "annotations");
  require_file(config.candidates, "candidates");
  if (config.scans_dir.empty()) fail(ErrorCode::kInvalidArgument, "missing required setting 'scans_dir'");
  const Layout layout{config.out_dir};

  const auto annotations = ct::load_annotations(read_file_text(config.annotations));
  const auto candidates = ct::load_candidates(read_file_text(config.candidates));
  if (candidates.empty()) fail(ErrorCode::kEmptyInput, "candidates file has no rows: " + config.candidates);
  const auto scans = discover_scans(config.scans_dir);
  if (scans.empty()) fail(ErrorCode::kEmptyInput, "no .mhd/.mha scans under " + config.scans_dir);

  std::vector<std::string> ids;
  for (const auto& [id, path] : scans) ids.push_back(id);
  const auto split = ct::split_dataset(ids, {1.0 - config.val_ratio - config.test_ratio, config.val_ratio,
                                             config.test_ratio},
                                       config.seed);

  std::vector<ct::Candidate> known;
  std::size_t unknown_scan = 0;
  for (const auto& c : candidates) {
    if (scans.contains(c.scan_id)) {
      known.push_back(c);
    } else {
      ++unknown_scan;
    }
  }
  if (unknown_scan > 0) logger()->warn("{} candidates refer to scans not found under {}", unknown_scan, config.scans_dir);

  const auto negatives = patch::sample_negatives(known, annotations, config.neg_ratio, derive_seed(config.seed, 1));
  // The selected negatives are a subsequence of the class-0 rows, so one
  // forward walk recovers them in input order.
  std::map<std::string, std::vector<ct::Candidate>> per_scan;
  std::size_t next_negative = 0;
  for (const auto& c : known) {
    if (c.label == 1) {
      per_scan[c.scan_id].push_back(c);
    } else if (next_negative < negatives.negatives.size() &&
               same_candidate(c, negatives.negatives[next_negative])) {
      per_scan[c.scan_id].push_back(c);
      ++next_negative;
    }
  }

  std::vector<std::string> work;
  for (const auto& [id, list] : per_scan) work.push_back(id);
  std::vector<patch::BuildResult> built(work.size());
  const patch::SampleOptions options{config.window, config.hu, config.image_size};
  // Full CT volumes are large; cap concurrent loads.
  const std::size_t workers = std::min<std::size_t>(workers_for(config), config.threads == 0 ? 4 : config.threads);
  parallel_for(work.size(), workers, [&](std::size_t i) {
    const auto volume = ct::read_metaimage(scans.at(work[i]));
    built[i] = patch::build_samples(volume, work[i], per_scan.at(work[i]), annotations, options);
  });

  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < work.size(); ++i) slot[work[i]] = i;
  std::size_t skipped = 0;
  for (const auto& b : built) skipped += b.skipped;

  json meta = artifact_stamp(config);
  meta["image_size"] = config.image_size;
  meta["window"] = config.window;
  meta["scans"] = scans.size();
  meta["skipped"] = skipped;
  meta["negatives_requested"] = negatives.requested;
  meta["negatives_eligible"] = negatives.eligible;
  json counts = json::object();
  std::size_t total = 0;
  std::size_t total_pos = 0;
  for (const auto part : {ct::Partition::kTrain, ct::Partition::kVal, ct::Partition::kTest}) {
    std::vector<patch::PatchSample> samples;
    for (const auto& id : split.ids(part)) {
      const auto it = slot.find(id);
      if (it == slot.end()) continue;
      for (auto& s : built[it->second].samples) samples.push_back(std::move(s));
    }
    const std::string name = ct::partition_name(part);
    patch::write_patch_set(layout.patches(name), samples);
    counts[name] = partition_counts(samples);
    total += samples.size();
    total_pos += counts[name]["positives"].get<std::size_t>();
  }
  meta["partitions"] = counts;
  write_json(layout.patches_meta(), meta);

  json split_doc = artifact_stamp(config);
  split_doc.update(ct::to_json(split));
  write_json(layout.split(), split_doc);

  logger()->info("preprocess: {} scans, {} positives, {} negatives, {} skipped", scans.size(), total_pos,
                 total - total_pos, skipped);
  json summary = {{"scans", scans.size()},
                  {"positives", total_pos},
                  {"negatives", total - total_pos},
                  {"skipped", skipped},
                  {"partitions", counts}};
  return {summary, {}};
}

CommandResult cmd_featurize(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  check_stamp(read_json(layout.patches_meta(), "patch metadata"), config, "patch set");
  std::string encoder_sha;
  const auto params = load_encoder(config, layout, &encoder_sha);
  const std::size_t dim = params.config.embed_dim;
  const std::size_t workers = workers_for(config);

  json meta = artifact_stamp(config);
  meta["dim"] = dim;
  meta["encoder_sha256"] = encoder_sha;
  meta["encoder"] = vit::to_json(params.config);
  json counts = json::object();
  for (const auto& part : kPartitions) {
    const auto set = patch::read_patch_set(layout.patches(part), config.image_size);
    FeatureTable table;
    table.dim = dim;
    table.rows = set.rows;
    table.cls.resize(set.rows.size() * dim);
    table.gap.resize(set.rows.size() * dim);
    parallel_for(set.rows.size(), workers, [&](std::size_t i) {
      const auto out = vit::encoder_forward(set.image(i), params, 1);
      std::copy(out.cls.begin(), out.cls.end(), table.cls.begin() + static_cast<std::ptrdiff_t>(i * dim));
      std::copy(out.gap.begin(), out.gap.end(), table.gap.begin() + static_cast<std::ptrdiff_t>(i * dim));
    });
    save_features(layout, part, table);
    counts[part] = table.size();
    logger()->info("featurize: {} {} samples", part, table.size());
  }
  meta["partitions"] = counts;
  write_json(layout.features_meta(), meta);
  return {{{"dim", dim}, {"partitions", counts}}, {}};
}

CommandResult cmd_train_heads(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  const auto train = load_features(layout, "train", config);
  const auto val = load_features(layout, "val", config);
  const auto kind = config.head_features;
  const auto trained = heads::train_heads(to_head_set(train, kind), to_head_set(val, kind), config.train, config.sce);

  json meta = artifact_stamp(config);
  meta["feature"] = feature_kind_name(kind);
  meta["dim"] = train.width(kind);
  meta["best_epoch"] = trained.best_epoch;
  meta["detection_trained"] = trained.detection_trained;
  meta["train"] = heads::to_json(config.train);
  meta["sce"] = heads::to_json(config.sce);
  const auto& best = trained.history.at(trained.best_epoch - 1);
  meta["val_acc"] = best.val_acc;
  vit::write_tensor_archive(heads::heads_to_archive(trained.cls, trained.det, meta), layout.heads());
  write_file_text(layout.history(), heads::history_csv(trained.history));
  logger()->info("train-heads: best epoch {} of {}, val acc {:.4f}", trained.best_epoch, trained.history.size(),
                 best.val_acc);
  return {{{"best_epoch", trained.best_epoch}, {"val_acc", best.val_acc}}, {}};
}

CommandResult cmd_train_classifier(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  const auto train = load_features(layout, "train", config);
  const auto data = to_dataset(train, config.classifier_features);
  if (data.size() == 0) fail(ErrorCode::kEmptyTrainingSet, "no training samples");

  ml::TreeConfig tree;
  tree.max_depth = config.max_depth;
  tree.min_samples_split = config.min_samples_split;
  json model;
  if (config.classifier == "dt") {
    model = ml::to_json(ml::fit_decision_tree(data, tree));
  } else if (config.classifier == "rf") {
    ml::ForestConfig fc;
    fc.n_trees = config.n_trees;
    fc.features_per_split = config.max_features;
    fc.bootstrap = config.bootstrap;
    fc.tree = tree;
    fc.master_seed = config.seed;
    fc.workers = workers_for(config);
    model = ml::to_json(ml::fit_random_forest(data, fc));
  } else if (config.classifier == "knn") {
    model = ml::to_json(ml::fit_knn(data, config.knn_k));
  } else {
    fail(ErrorCode::kInvalidArgument, "classifier must be dt, rf or knn, got '" + config.classifier + "'");
  }

  json doc = {{"format", "nodulekit-classifier"}, {"version", 1}, {"type", config.classifier}};
  doc.update(artifact_stamp(config));
  doc["feature"] = feature_kind_name(config.classifier_features);
  doc["dim"] = data.dim;
  doc["model"] = std::move(model);
  write_json(layout.classifier(config.classifier), doc);
  logger()->info("train-classifier: {} on {} samples", config.classifier, data.size());
  return {{{"classifier", config.classifier}, {"samples", data.size()}}, {}};
}

namespace {

struct LoadedClassifier {
  std::string type;
  FeatureKind feature = FeatureKind::kGap;
  std::size_t dim = 0;
  std::optional<ml::DecisionTreeModel> tree;
  std::optional<ml::RandomForestModel> forest;
  std::optional<ml::KnnModel> knn;

  ml::Prediction predict(std::span<const float> x) const {
    if (tree) return ml::predict_tree(*tree, x);
    if (forest) return ml::predict_forest(*forest, x);
    return ml::knn_predict(*knn, x);
  }
};

LoadedClassifier load_classifier(const Layout& layout, const std::string& type, const PipelineConfig& config) {
  const auto doc = read_json(layout.classifier(type), "classifier model");
  if (doc.value("format", "") != "nodulekit-classifier" || doc.value("version", 0) != 1) {
    fail(ErrorCode::kVersionMismatch, "unsupported classifier document " + layout.classifier(type).string());
  }
  check_stamp(doc, config, "classifier " + type);
  LoadedClassifier c;
  try {
    c.type = doc.at("type").get<std::string>();
    c.feature = parse_feature_kind(doc.at("feature").get<std::string>());
    c.dim = doc.at("dim").get<std::size_t>();
    const auto& m = doc.at("model");
    if (c.type == "dt") {
      c.tree = ml::tree_from_json(m);
    } else if (c.type == "rf") {
      c.forest = ml::forest_from_json(m);
    } else if (c.type == "knn") {
      c.knn = ml::knn_from_json(m);
    } else {
      fail(ErrorCode::kMissingArtifact, "unknown classifier type " + c.type);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kMissingArtifact, std::string("malformed classifier document: ") + e.what());
  }
  return c;
}

}  // namespace

CommandResult cmd_evaluate(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  const std::string& part = config.partition;
  if (std::find(kPartitions.begin(), kPartitions.end(), part) == kPartitions.end()) {
    fail(ErrorCode::kInvalidArgument, "partition must be train, val or test");
  }
  const auto table = load_features(layout, part, config);
  if (table.size() == 0) fail(ErrorCode::kEmptyEvaluation, "partition " + part + " has no samples");

  std::vector<double> scores(table.size());
  std::vector<int> labels(table.size());
  FeatureKind kind{};
  if (config.model == "heads") {
    const auto h = load_heads(config, layout);
    kind = h.feature;
    std::vector<float> buf(table.width(kind));
    if (buf.size() != h.cls.dim) fail(ErrorCode::kShapeMismatch, "head input width differs from features");
    for (std::size_t i = 0; i < table.size(); ++i) {
      table.select(i, kind, buf);
      scores[i] = heads::head_forward_classify(buf, h.cls).probs[1];
      labels[i] = table.rows[i].label;
    }
  } else if (config.model == "dt" || config.model == "rf" || config.model == "knn") {
    const auto c = load_classifier(layout, config.model, config);
    kind = c.feature;
    std::vector<float> buf(table.width(kind));
    if (buf.size() != c.dim) fail(ErrorCode::kShapeMismatch, "classifier input width differs from features");
    for (std::size_t i = 0; i < table.size(); ++i) {
      table.select(i, kind, buf);
      scores[i] = c.predict(buf).score;
      labels[i] = table.rows[i].label;
    }
  } else {
    fail(ErrorCode::kInvalidArgument, "model must be heads, dt, rf or knn, got '" + config.model + "'");
  }

  const auto report = metrics::evaluate_scores(scores, labels);
  json doc = {{"format", "nodulekit-metrics"}, {"version", 1}};
  doc.update(artifact_stamp(config));
  doc["model"] = config.model;
  doc["partition"] = part;
  doc["feature"] = feature_kind_name(kind);
  doc.update(metrics::to_json(report));
  write_json(layout.eval(config.model, part, "_metrics.json"), doc);
  write_file_text(layout.eval(config.model, part, "_roc.csv"), metrics::roc_csv(report.roc));
  if (!report.roc.empty()) {
    const std::string title = config.model + " / " + part + "  AUC " + metrics::percent(*report.auc) + "%";
    write_file_text(layout.eval(config.model, part, "_roc.svg"), metrics::roc_svg(report.roc, title));
  }
  logger()->info("evaluate {} on {}: acc {} P {} R {} F1 {} AUC {}", config.model, part,
                 metrics::percent(report.metrics.accuracy), metrics::percent(report.metrics.precision),
                 metrics::percent(report.metrics.recall), metrics::percent(report.metrics.f1),
                 report.auc ? metrics::percent(*report.auc) : std::string("n/a"));
  return {doc, {}};
}

CommandResult cmd_predict(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  require_file(config.scan, "scan");
  if (config.center.empty()) fail(ErrorCode::kInvalidArgument, "missing required setting 'center' (x,y,z in mm)");
  const auto parts = split(config.center, ',');
  ct::Vec3 world{};
  if (parts.size() != 3) fail(ErrorCode::kInvalidArgument, "center must be x,y,z");
  for (std::size_t a = 0; a < 3; ++a) {
    const auto v = parse_double(trim(parts[a]));
    if (!v) fail(ErrorCode::kInvalidArgument, "center component '" + std::string(parts[a]) + "' is not a number");
    world[a] = *v;
  }

  const auto h = load_heads(config, layout);
  const auto params = load_encoder(config, layout, nullptr);
  const auto volume = ct::read_metaimage(config.scan);
  if (!volume.axis_aligned()) fail(ErrorCode::kNonAxisAligned, "scan direction is not axis aligned");
  const auto voxel = ct::world_to_voxel(volume, world);
  const patch::VoxelIndex center{std::llround(voxel[0]), std::llround(voxel[1]), std::llround(voxel[2])};
  patch::VoxelIndex start{};
  bool clamped = false;
  auto slice = patch::extract_mid_slice(volume, center, config.window, &start, &clamped);
  const auto raw_slice = slice;
  for (auto& v : slice.pixels) v = static_cast<float>(ct::normalize_hu(v, config.hu));
  const auto image = patch::replicate_channels(patch::resize_bilinear(slice, config.image_size, config.image_size));
  const auto enc = vit::encoder_forward(image.pixels, params, workers_for(config));

  std::vector<float> feature;
  switch (h.feature) {
    case FeatureKind::kCls: feature = enc.cls; break;
    case FeatureKind::kGap: feature = enc.gap; break;
    case FeatureKind::kClsGap:
      feature = enc.cls;
      feature.insert(feature.end(), enc.gap.begin(), enc.gap.end());
      break;
  }
  if (feature.size() != h.cls.dim) fail(ErrorCode::kShapeMismatch, "head input width differs from encoder output");
  const auto cls = heads::head_forward_classify(feature, h.cls);
  const auto box = heads::head_forward_detect(feature, h.det);
  const int label = cls.probs[1] >= 0.5 ? 1 : 0;

  const auto placed = place_box(volume, start, config.window, box, center[2]);
  const std::string scan_id = fs::path(config.scan).stem().string();
  char line[512];
  std::snprintf(line, sizeof line,
                "scan=%s label=%d probability=%.6f box_center_mm=(%.3f,%.3f,%.3f) box_size_mm=(%.3f,%.3f) "
                "box_voxels=(%.2f,%.2f,%.2f,%.2f) slice_z=%lld\n",
                scan_id.c_str(), label, cls.probs[1], placed.center_mm[0], placed.center_mm[1], placed.center_mm[2],
                placed.size_mm[0], placed.size_mm[1], placed.x0, placed.y0, placed.x1, placed.y1, center[2]);

  json summary = {{"scan", scan_id},
                  {"label", label},
                  {"probability", cls.probs[1]},
                  {"box", {box[0], box[1], box[2], box[3]}},
                  {"box_center_mm", placed.center_mm},
                  {"box_size_mm", placed.size_mm},
                  {"box_voxels", {placed.x0, placed.y0, placed.x1, placed.y1}},
                  {"window_start", start},
                  {"clamped", clamped}};
  if (!config.overlay.empty()) {
    write_file_text(config.overlay, overlay_svg(raw_slice, config.hu, start, placed, label, cls.probs[1]));
  }
  return {summary, line};
}

json inspect_archive(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto archive = vit::load_tensor_archive(bytes);
  json meta;
  try {
    meta = json::parse(archive.metadata);
  } catch (const json::exception&) {
    meta = archive.metadata;
  }
  json tensors = json::array();
  std::size_t params = 0;
  for (const auto& [name, t] : archive.entries()) {
    ByteWriter w;
    w.put_floats(t.data);
    tensors.push_back({{"name", name}, {"dims", t.dims}, {"numel", t.numel()}, {"sha256", sha256_hex(w.bytes())}});
    params += t.numel();
  }
  return {{"path", path.string()},
          {"format_version", vit::kArchiveVersion},
          {"file_sha256", sha256_hex(bytes)},
          {"metadata", meta},
          {"tensor_count", archive.size()},
          {"parameters", params},
          {"tensors", tensors}};
}

CommandResult cmd_archive_inspect(const PipelineConfig& config) {
  require_file(config.archive, "archive");
  const auto doc = inspect_archive(config.archive);
  return {doc, doc.dump(2) + "\n"};
}

CommandResult cmd_init_encoder(const PipelineConfig& config) {
  const Layout layout{config.out_dir};
  vit::EncoderConfig ec;
  ec.image_size = config.image_size;
  ec.patch_size = config.encoder_patch_size;
  ec.embed_dim = config.encoder_embed_dim;
  ec.depth = config.encoder_depth;
  ec.num_heads = config.encoder_heads;
  ec.pretrain_grid = config.encoder_pretrain_grid;
  ec.validate();
  const fs::path path = config.encoder.empty() ? layout.encoder() : fs::path(config.encoder);
  vit::write_tensor_archive(vit::encoder_to_archive(vit::random_encoder(ec, config.seed)), path);
  logger()->info("init-encoder: wrote {} (D={}, depth={}, heads={})", path.string(), ec.embed_dim, ec.depth,
                 ec.num_heads);
  return {{{"encoder", path.string()}, {"config", vit::to_json(ec)}}, {}};
}

CommandResult run_command(const std::string& command, const PipelineConfig& config) {
  if (command == "preprocess") return cmd_preprocess(config);
  if (command == "featurize") return cmd_featurize(config);
  if (command == "train-heads") return cmd_train_heads(config);
  if (command == "train-classifier") return cmd_train_classifier(config);
  if (command == "evaluate") return cmd_evaluate(config);
  if (command == "predict") return cmd_predict(config);
  if (command == "archive-inspect") return cmd_archive_inspect(config);
  if (command == "init-encoder") return cmd_init_encoder(config);
  if (command == "synth") return cmd_synth(config);
  fail(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
}

}  // namespace nodulekit::pipeline

#include "pipeline/artifacts.hpp"

#include <algorithm>

#include "common/binary_io.hpp"
#include "common/error.hpp"
#include "pipeline/pipeline.hpp"

namespace nodulekit::pipeline {

void FeatureTable::select(std::size_t i, FeatureKind kind, std::span<float> out) const {
  const auto c = std::span(cls).subspan(i * dim, dim);
  const auto g = std::span(gap).subspan(i * dim, dim);
  switch (kind) {
    case FeatureKind::kCls: std::copy(c.begin(), c.end(), out.begin()); break;
    case FeatureKind::kGap: std::copy(g.begin(), g.end(), out.begin()); break;
    case FeatureKind::kClsGap:
      std::copy(c.begin(), c.end(), out.begin());
      std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(dim));
      break;
  }
}

nlohmann::json read_json(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, what + " not found at " + path.string());
  try {
    return nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMissingArtifact, what + " at " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  write_file_text(path, doc.dump(2) + "\n");
}

FeatureTable load_features(const Layout& layout, const std::string& part, const PipelineConfig& config) {
  const auto meta = read_json(layout.features_meta(), "feature metadata");
  check_stamp(meta, config, "features");
  FeatureTable t;
  t.dim = meta.at("dim").get<std::size_t>();
  const auto stem = layout.features_dir() / part;
  const auto csv = fs::path(stem.string() + ".csv");
  if (!fs::exists(csv)) fail(ErrorCode::kMissingArtifact, "feature manifest " + csv.string() + " not found");
  t.rows = patch::parse_manifest(read_file_text(csv));
  t.cls = read_f32_file(stem.string() + ".cls.f32");
  t.gap = read_f32_file(stem.string() + ".gap.f32");
  if (t.cls.size() != t.rows.size() * t.dim || t.gap.size() != t.rows.size() * t.dim) {
    fail(ErrorCode::kPayloadSizeMismatch, "feature matrices for " + part + " do not match " +
                                              std::to_string(t.rows.size()) + " x " + std::to_string(t.dim));
  }
  return t;
}

void save_features(const Layout& layout, const std::string& part, const FeatureTable& table) {
  const auto stem = (layout.features_dir() / part).string();
  write_f32_file(stem + ".cls.f32", table.cls);
  write_f32_file(stem + ".gap.f32", table.gap);
  write_file_text(stem + ".csv", patch::write_manifest(table.rows));
}

heads::FeatureSet to_head_set(const FeatureTable& table, FeatureKind kind) {
  heads::FeatureSet set;
  set.dim = table.width(kind);
  std::vector<float> buf(set.dim);
  for (std::size_t i = 0; i < table.size(); ++i) {
    table.select(i, kind, buf);
    const auto& row = table.rows[i];
    std::optional<heads::Box> box;
    if (row.bbox) box = heads::Box{row.bbox->cx, row.bbox->cy, row.bbox->bw, row.bbox->bh};
    set.add(buf, row.label, box);
  }
  return set;
}

ml::Dataset to_dataset(const FeatureTable& table, FeatureKind kind) {
  ml::Dataset data;
  data.dim = table.width(kind);
  std::vector<float> buf(data.dim);
  for (std::size_t i = 0; i < table.size(); ++i) {
    table.select(i, kind, buf);
    data.add(buf, table.rows[i].label);
  }
  return data;
}

}  // namespace nodulekit::pipeline

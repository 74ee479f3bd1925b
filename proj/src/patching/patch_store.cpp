#include "patching/patch_store.hpp"

#include "common/binary_io.hpp"
#include "common/error.hpp"
#include "common/text.hpp"

namespace nodulekit::patch {

ManifestRow manifest_row(const PatchSample& s) {
  return {s.scan_id, s.center, s.window, s.label, s.bbox, s.clamped};
}

std::string write_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : rows) {
    out += r.scan_id + "," + std::to_string(r.center[0]) + "," + std::to_string(r.center[1]) + "," +
           std::to_string(r.center[2]) + "," + std::to_string(r.window) + "," +
           std::to_string(r.label) + ",";
    if (r.bbox) {
      out += format_number(r.bbox->cx) + "," + format_number(r.bbox->cy) + "," +
             format_number(r.bbox->bw) + "," + format_number(r.bbox->bh);
    } else {
      out += ",,,";
    }
    out += r.clamped ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<ManifestRow> parse_manifest(std::string_view csv_text) {
  auto lines = split(csv_text, '\n');
  if (lines.empty() || trim(lines[0]) != kManifestHeader) {
    fail(ErrorCode::kUnknownHeader, "patch manifest header mismatch");
  }
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto c = split(line, ',');
    const auto bad = [&] {
      fail(ErrorCode::kMalformedRow, "patch manifest line " + std::to_string(i + 1) + " is malformed");
    };
    if (c.size() != 11) bad();
    ManifestRow r;
    r.scan_id = std::string(c[0]);
    for (int k = 0; k < 3; ++k) {
      const auto v = parse_int(c[1 + k]);
      if (!v) bad();
      r.center[k] = *v;
    }
    const auto w = parse_int(c[4]);
    const auto label = parse_int(c[5]);
    const auto clamped = parse_int(c[10]);
    if (!w || !label || !clamped) bad();
    r.window = static_cast<std::size_t>(*w);
    r.label = static_cast<int>(*label);
    r.clamped = *clamped != 0;
    if (!trim(c[6]).empty()) {
      const auto cx = parse_double(c[6]);
      const auto cy = parse_double(c[7]);
      const auto bw = parse_double(c[8]);
      const auto bh = parse_double(c[9]);
      if (!cx || !cy || !bw || !bh) bad();
      r.bbox = BoxTarget{*cx, *cy, *bw, *bh};
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_patch_set(const std::filesystem::path& stem, const std::vector<PatchSample>& samples) {
  ByteWriter w;
  std::vector<ManifestRow> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    w.put_floats(s.image.pixels);
    rows.push_back(manifest_row(s));
  }
  auto bin = stem;
  bin += ".bin";
  auto csv = stem;
  csv += ".csv";
  write_file_bytes(bin, w.bytes());
  write_file_text(csv, write_manifest(rows));
}

PatchSet read_patch_set(const std::filesystem::path& stem, std::size_t image_size) {
  auto bin = stem;
  bin += ".bin";
  auto csv = stem;
  csv += ".csv";
  if (!std::filesystem::exists(bin) || !std::filesystem::exists(csv)) {
    fail(ErrorCode::kMissingArtifact, "patch set " + stem.string() + " not found");
  }
  PatchSet set;
  set.image_size = image_size;
  set.rows = parse_manifest(read_file_text(csv));
  set.images = read_f32_file(bin);
  if (set.images.size() != set.rows.size() * set.image_floats()) {
    fail(ErrorCode::kPayloadSizeMismatch, bin.string() + " does not hold " +
                                              std::to_string(set.rows.size()) + " images of size " +
                                              std::to_string(image_size));
  }
  return set;
}

}  // namespace nodulekit::patch

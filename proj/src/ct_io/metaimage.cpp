#include "ct_io/metaimage.hpp"

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>

#include "common/binary_io.hpp"
#include "common/error.hpp"
#include "common/text.hpp"

namespace nodulekit::ct {

namespace {

using HeaderMap = std::map<std::string, std::string, std::less<>>;

HeaderMap parse_header_lines(std::string_view header) {
  HeaderMap keys;
  for (std::string_view line : split(header, '\n')) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    keys.emplace(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return keys;
}

const std::string* find_key(const HeaderMap& keys, std::initializer_list<std::string_view> names) {
  for (auto name : names) {
    if (auto it = keys.find(name); it != keys.end()) return &it->second;
  }
  return nullptr;
}

const std::string& require_key(const HeaderMap& keys,
                               std::initializer_list<std::string_view> names) {
  if (const auto* v = find_key(keys, names)) return *v;
  fail(ErrorCode::kMissingRequiredKey, "MetaImage header lacks " + std::string(*names.begin()));
}

template <std::size_t N>
std::array<double, N> parse_numbers(const std::string& text, std::string_view key) {
  const auto parts = split_whitespace(text);
  if (parts.size() != N) {
    fail(ErrorCode::kInvalidGeometry, std::string(key) + " needs " + std::to_string(N) +
                                          " values, got '" + text + "'");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const auto v = parse_double(parts[i]);
    if (!v) fail(ErrorCode::kInvalidGeometry, std::string(key) + " has non-numeric value '" + text + "'");
    out[i] = *v;
  }
  return out;
}

bool is_true(const std::string* value) {
  return value != nullptr && (*value == "True" || *value == "true" || *value == "1");
}

}  // namespace

std::string metaimage_data_file(std::string_view header) {
  const auto keys = parse_header_lines(header);
  const auto* v = find_key(keys, {"ElementDataFile"});
  return v ? *v : std::string();
}

CtVolume parse_metaimage(std::string_view header, std::span<const unsigned char> raw) {
  const auto keys = parse_header_lines(header);

  require_key(keys, {"ObjectType"});
  const auto& ndims_text = require_key(keys, {"NDims"});
  const auto ndims = parse_int(ndims_text);
  if (!ndims || *ndims != 3) {
    fail(ErrorCode::kUnsupportedDimensionality, "NDims must be 3, got '" + ndims_text + "'");
  }
  const auto dim_values = parse_numbers<3>(require_key(keys, {"DimSize"}), "DimSize");
  const auto& element_type = require_key(keys, {"ElementType"});
  const auto spacing = parse_numbers<3>(require_key(keys, {"ElementSpacing", "ElementSize"}),
                                        "ElementSpacing");
  const auto origin = parse_numbers<3>(require_key(keys, {"Offset", "Origin", "Position"}), "Offset");
  require_key(keys, {"ElementDataFile"});

  Mat3 direction = kIdentity;
  if (const auto* tm = find_key(keys, {"TransformMatrix", "Rotation", "Orientation"})) {
    const auto values = parse_numbers<9>(*tm, "TransformMatrix");
    // Consecutive triples are the direction vectors of axes x, y, z.
    for (int axis = 0; axis < 3; ++axis) {
      for (int comp = 0; comp < 3; ++comp) direction[comp * 3 + axis] = values[axis * 3 + comp];
    }
  }

  if (is_true(find_key(keys, {"CompressedData"}))) {
    fail(ErrorCode::kUnsupportedCompression, "compressed MetaImage payloads are not supported");
  }
  if (const auto* channels = find_key(keys, {"ElementNumberOfChannels"})) {
    if (parse_int(*channels).value_or(0) != 1) {
      fail(ErrorCode::kUnsupportedElementType, "only single-channel images are supported");
    }
  }

  std::size_t width = 0;
  ElementType type{};
  if (element_type == "MET_SHORT") {
    width = 2;
    type = ElementType::kShort;
  } else if (element_type == "MET_FLOAT") {
    width = 4;
    type = ElementType::kFloat;
  } else {
    fail(ErrorCode::kUnsupportedElementType, "unsupported ElementType " + element_type);
  }

  Dims dims;
  for (double v : dim_values) {
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      fail(ErrorCode::kInvalidGeometry, "DimSize entries must be positive integers");
    }
  }
  dims.nx = static_cast<std::size_t>(dim_values[0]);
  dims.ny = static_cast<std::size_t>(dim_values[1]);
  dims.nz = static_cast<std::size_t>(dim_values[2]);

  const std::size_t expected = dims.count() * width;
  std::span<const unsigned char> payload = raw;
  if (const auto* hs = find_key(keys, {"HeaderSize"})) {
    const auto skip = parse_int(*hs).value_or(0);
    if (skip == -1 && raw.size() >= expected) {
      payload = raw.subspan(raw.size() - expected);
    } else if (skip > 0 && static_cast<std::size_t>(skip) <= raw.size()) {
      payload = raw.subspan(static_cast<std::size_t>(skip));
    }
  }
  if (payload.size() != expected) {
    fail(ErrorCode::kPayloadSizeMismatch, "payload has " + std::to_string(payload.size()) +
                                              " bytes, expected " + std::to_string(expected));
  }

  const bool msb = is_true(find_key(keys, {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}));
  const bool swap = msb != (std::endian::native == std::endian::big);
  std::vector<float> voxels(dims.count());
  if (type == ElementType::kShort) {
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      std::int16_t v;
      std::memcpy(&v, payload.data() + 2 * i, 2);
      if (swap) v = byteswap_value(v);
      voxels[i] = static_cast<float>(v);
    }
  } else {
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      float v;
      std::memcpy(&v, payload.data() + 4 * i, 4);
      if (swap) v = byteswap_value(v);
      voxels[i] = v;
    }
  }
  return CtVolume(dims, {spacing[0], spacing[1], spacing[2]}, {origin[0], origin[1], origin[2]},
                  direction, std::move(voxels), type);
}

MetaImageText serialize_metaimage(const CtVolume& volume, std::string_view data_file_name) {
  const auto triple = [](const Vec3& v) {
    return format_number(v[0]) + " " + format_number(v[1]) + " " + format_number(v[2]);
  };
  const auto& d = volume.direction();
  std::string tm;
  for (int axis = 0; axis < 3; ++axis) {
    for (int comp = 0; comp < 3; ++comp) {
      if (!tm.empty()) tm += ' ';
      tm += format_number(d[comp * 3 + axis]);
    }
  }
  const bool is_short = volume.stored_as() == ElementType::kShort;
  std::string header;
  header += "ObjectType = Image\n";
  header += "NDims = 3\n";
  header += "BinaryData = True\n";
  header += "BinaryDataByteOrderMSB = False\n";
  header += "CompressedData = False\n";
  header += "TransformMatrix = " + tm + "\n";
  header += "Offset = " + triple(volume.origin()) + "\n";
  header += "ElementSpacing = " + triple(volume.spacing()) + "\n";
  header += "DimSize = " + std::to_string(volume.dims().nx) + " " +
            std::to_string(volume.dims().ny) + " " + std::to_string(volume.dims().nz) + "\n";
  header += std::string("ElementType = ") + (is_short ? "MET_SHORT" : "MET_FLOAT") + "\n";
  header += "ElementDataFile = " + std::string(data_file_name) + "\n";

  ByteWriter w;
  if (is_short) {
    for (float v : volume.voxels()) w.put(static_cast<std::int16_t>(v));
  } else {
    w.put_floats(volume.voxels());
  }
  return {std::move(header), w.release()};
}

CtVolume read_metaimage(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());

  // The header ends after the ElementDataFile line.
  const auto key_pos = text.find("ElementDataFile");
  if (key_pos == std::string_view::npos) {
    fail(ErrorCode::kMissingRequiredKey, path.string() + ": MetaImage header lacks ElementDataFile");
  }
  const auto eol = text.find('\n', key_pos);
  const std::size_t header_end = eol == std::string_view::npos ? text.size() : eol + 1;
  const std::string_view header = text.substr(0, header_end);
  const std::string data_file = metaimage_data_file(header);

  if (data_file == "LOCAL") {
    return parse_metaimage(header, std::span(bytes).subspan(header_end));
  }
  const auto raw = read_file_bytes(path.parent_path() / data_file);
  return parse_metaimage(header, raw);
}

void write_metaimage(const CtVolume& volume, const std::filesystem::path& path) {
  auto raw_path = path;
  raw_path.replace_extension(".raw");
  const auto text = serialize_metaimage(volume, raw_path.filename().string());
  write_file_text(path, text.header);
  write_file_bytes(raw_path, text.raw);
}

}  // namespace nodulekit::ct

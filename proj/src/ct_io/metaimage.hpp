#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ct_io/ct_volume.hpp"

namespace nodulekit::ct {

/// Parses a MetaImage header plus its detached payload.
///
/// Required keys: ObjectType, NDims (= 3), DimSize, ElementType (MET_SHORT or
/// MET_FLOAT), ElementSpacing or ElementSize, Offset (Origin and Position are
/// accepted aliases) and ElementDataFile. TransformMatrix lists the world
/// direction of each voxel axis in turn, as ITK writes it; when absent the
/// direction is the identity. Payload bytes are little-endian unless
/// BinaryDataByteOrderMSB / ElementByteOrderMSB is True.
CtVolume parse_metaimage(std::string_view header, std::span<const unsigned char> raw);

/// Value of ElementDataFile, or empty if the key is missing.
std::string metaimage_data_file(std::string_view header);

struct MetaImageText {
  std::string header;
  std::vector<unsigned char> raw;
};

/// Inverse of parse_metaimage. Geometry is printed with round-trip precision
/// and the payload is written in the volume's stored element type.
MetaImageText serialize_metaimage(const CtVolume& volume, std::string_view data_file_name);

/// Reads a .mhd (detached payload) or .mha (ElementDataFile = LOCAL) file.
CtVolume read_metaimage(const std::filesystem::path& path);

/// Writes `path` (.mhd) and a sibling .raw payload.
void write_metaimage(const CtVolume& volume, const std::filesystem::path& path);

}  // namespace nodulekit::ct

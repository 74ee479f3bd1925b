#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nodulekit {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

}  // namespace nodulekit

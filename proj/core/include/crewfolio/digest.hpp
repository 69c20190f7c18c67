#pragma once

#include <string>
#include <string_view>

namespace crewfolio {

/// Lower-case hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Digest of a file's contents. Throws IoError when unreadable.
std::string sha256_file_hex(const std::string& path);

}  // namespace crewfolio

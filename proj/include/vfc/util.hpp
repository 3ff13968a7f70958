#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vfc {

// Strings.
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view s, char delimiter);
std::string join(const std::vector<std::string>& parts, std::string_view separator);
std::string regex_escape(std::string_view s);
std::string excerpt(std::string_view s, std::size_t max_len = 200);

// Hashing and encoding (OpenSSL-backed).
std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view bytes);
/// Throws Error(malformed_response) on invalid input.
std::string base64_decode(std::string_view text);

// Files.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Guesses an image MIME type from magic bytes; "application/octet-stream" when unknown.
std::string sniff_mime(std::string_view bytes);
std::string extension_for_mime(std::string_view mime);

/// Neumaier-compensated mean. Empty input yields 0.
double compensated_mean(const std::vector<double>& values);

}  // namespace vfc

#pragma once

#include <filesystem>
#include <string>

namespace mmsr {

// Writes through a sibling temp file and renames, so readers never observe
// a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Whole file as bytes. Throws std::runtime_error when unreadable.
std::string read_file(const std::filesystem::path& path);

}  // namespace mmsr

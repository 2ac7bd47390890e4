#pragma once

#include <filesystem>
#include <string>

namespace ovfuse {

// SHA-256 as lowercase hex; used for golden-byte tests and the pipeline
// manifest, where rerun identity is checked by hash equality.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ovfuse

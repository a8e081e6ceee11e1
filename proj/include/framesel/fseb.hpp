#pragma once

// FSEB embedding files.
//
//   offset  size  field
//   0       4     magic "FSEB"
//   4       4     version, uint32 little-endian (= 1)
//   8       4     rows M, uint32 little-endian
//   12      4     dim d, uint32 little-endian
//   16      4*M*d values, IEEE-754 binary32 little-endian, row-major
//
// Values are stored at 32-bit precision and widened to 64-bit on load.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "framesel/autodiff.hpp"

namespace framesel {

inline constexpr std::uint32_t kFsebVersion = 1;
inline constexpr std::size_t kFsebHeaderBytes = 16;

std::vector<std::byte> encode_fseb(const Matrix& values);
// `source` names the payload in error messages.
Matrix decode_fseb(std::span<const std::byte> bytes, const std::string& source = "<memory>");

Matrix read_embeddings(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void write_embeddings(const Matrix& values, const std::filesystem::path& path);

// Atomic whole-file write shared by every on-disk output.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace framesel

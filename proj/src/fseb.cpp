#include "framesel/fseb.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <system_error>

#include "framesel/errors.hpp"

namespace framesel {
namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::byte>((v >> shift) & 0xFFu));
  }
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
  }
  return v;
}

}  // namespace

std::vector<std::byte> encode_fseb(const Matrix& values) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (static_cast<std::uint64_t>(values.rows()) > kMax ||
      static_cast<std::uint64_t>(values.cols()) > kMax) {
    throw FormatError("FSEB: matrix too large for 32-bit dimensions");
  }
  std::vector<std::byte> out;
  out.reserve(kFsebHeaderBytes + 4 * static_cast<std::size_t>(values.size()));
  for (char c : {'F', 'S', 'E', 'B'}) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kFsebVersion);
  put_u32(out, static_cast<std::uint32_t>(values.rows()));
  put_u32(out, static_cast<std::uint32_t>(values.cols()));
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const auto narrowed = static_cast<float>(values(r, c));
      if (!std::isfinite(narrowed)) {
        throw FormatError("FSEB: value at row " + std::to_string(r) +
                          " is not finite at 32-bit precision");
      }
      put_u32(out, std::bit_cast<std::uint32_t>(narrowed));
    }
  }
  return out;
}

Matrix decode_fseb(std::span<const std::byte> bytes, const std::string& source) {
  if (bytes.size() < 4 || bytes[0] != std::byte{'F'} || bytes[1] != std::byte{'S'} ||
      bytes[2] != std::byte{'E'} || bytes[3] != std::byte{'B'}) {
    throw FormatError(source + ": not an FSEB file");
  }
  if (bytes.size() < kFsebHeaderBytes) {
    throw FormatError(source + ": size mismatch, expected at least " +
                      std::to_string(kFsebHeaderBytes) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFsebVersion) {
    throw FormatError(source + ": unsupported FSEB version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  const std::uint64_t expected = kFsebHeaderBytes + 4 * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError(source + ": size mismatch, expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = kFsebHeaderBytes;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const float v = std::bit_cast<float>(get_u32(bytes, offset));
      offset += 4;
      if (!std::isfinite(v)) {
        throw FormatError(source + ": non-finite value in row " + std::to_string(r));
      }
      out(r, c) = static_cast<double>(v);
    }
  }
  return out;
}

Matrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_fseb(std::as_bytes(std::span<const char>(raw)), path.string());
}

void write_embeddings(const Matrix& values, const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = encode_fseb(values);
  write_file_atomic(path, bytes);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(path.string() + ": rename failed: " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

}  // namespace framesel

#pragma once

#include "neurostage/common.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace neurostage::io {

// Binary container shared by feature caches, EEG stores and checkpoints:
//
//   offset  size  field
//   0       4     magic "NSFC"
//   4       4     version, u32 little-endian
//   8       1     level code (0 low, 1 high, 2 final, 3 text, 4 eeg, 5 params)
//   9       1     dtype code (0 float32)
//   10      8     n_rows, u64 little-endian
//   18      8     dim, u64 little-endian
//   26      4*n*d payload, row-major float32 little-endian
//   ...     4     CRC32 of the payload bytes, u32 little-endian

inline constexpr std::array<char, 4> kMagic = {'N', 'S', 'F', 'C'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 26;

enum class LevelCode : std::uint8_t { low = 0, high = 1, final = 2, text = 3, eeg = 4, params = 5 };

inline const char* level_name(LevelCode c) {
  switch (c) {
    case LevelCode::low: return "low";
    case LevelCode::high: return "high";
    case LevelCode::final: return "final";
    case LevelCode::text: return "text";
    case LevelCode::eeg: return "eeg";
    case LevelCode::params: return "params";
  }
  return "?";
}

struct Container {
  LevelCode level = LevelCode::low;
  std::uint64_t rows = 0;
  std::uint64_t dim = 0;
  Mat<float> data;
};

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> encode(LevelCode level, const Mat<float>& data) {
  std::vector<unsigned char> buf;
  const auto rows = static_cast<std::uint64_t>(data.rows());
  const auto dim = static_cast<std::uint64_t>(data.cols());
  buf.reserve(kHeaderBytes + 4 * rows * dim + 4);
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  detail::put_le<std::uint32_t>(buf, kVersion);
  buf.push_back(static_cast<unsigned char>(level));
  buf.push_back(0);  // float32
  detail::put_le<std::uint64_t>(buf, rows);
  detail::put_le<std::uint64_t>(buf, dim);
  const std::size_t payload_start = buf.size();
  for (Index r = 0; r < data.rows(); ++r)
    for (Index c = 0; c < data.cols(); ++c) {
      std::uint32_t bits;
      const float v = data(r, c);
      std::memcpy(&bits, &v, 4);
      detail::put_le<std::uint32_t>(buf, bits);
    }
  const std::uint32_t crc =
      detail::crc32_of(buf.data() + payload_start, buf.size() - payload_start);
  detail::put_le<std::uint32_t>(buf, crc);
  return buf;
}

// Writes to a temporary sibling, then renames, so readers never see a
// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require<Error>(static_cast<bool>(os), "cannot open ", tmp, " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require<Error>(static_cast<bool>(os), "write failed for ", tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void write_container(const std::filesystem::path& path, LevelCode level,
                            const Mat<float>& data) {
  const auto buf = encode(level, data);
  write_file_atomic(path, std::string(buf.begin(), buf.end()));
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {});
}

/// Parses and validates a container. Errors are distinguished:
///  - ShapeMismatchError: the payload holds a whole number of rows of a
///    different width than the header declares;
///  - ChecksumError: payload length is otherwise inconsistent (truncation,
///    garbage) or the CRC does not match;
///  - VersionMismatchError / LoadError for header problems.
inline Container decode(const std::vector<unsigned char>& buf, const std::string& origin,
                        std::optional<LevelCode> expect = std::nullopt) {
  if (buf.size() < kHeaderBytes)
    throw ChecksumError(origin + ": file too short for a container header (" +
                        std::to_string(buf.size()) + " bytes)");
  if (std::memcmp(buf.data(), kMagic.data(), 4) != 0)
    throw LoadError(origin + ": bad magic, not an NSFC container");
  const auto version = detail::get_le<std::uint32_t>(buf.data() + 4);
  if (version != kVersion)
    throw VersionMismatchError(origin + ": container version " + std::to_string(version) +
                               ", expected " + std::to_string(kVersion));
  Container c;
  c.level = static_cast<LevelCode>(buf[8]);
  if (buf[8] > 5) throw LoadError(origin + ": unknown level code " + std::to_string(buf[8]));
  if (buf[9] != 0) throw LoadError(origin + ": unsupported dtype code " + std::to_string(buf[9]));
  if (expect && c.level != *expect)
    throw LoadError(origin + ": holds level '" + level_name(c.level) + "', expected '" +
                    level_name(*expect) + "'");
  c.rows = detail::get_le<std::uint64_t>(buf.data() + 10);
  c.dim = detail::get_le<std::uint64_t>(buf.data() + 18);

  const std::size_t body = buf.size() - kHeaderBytes;
  const std::uint64_t expected = 4 * c.rows * c.dim + 4;
  if (body != expected) {
    if (body >= 4 && c.rows > 0 && (body - 4) % (4 * c.rows) == 0 && (body - 4) > 0) {
      const auto actual_dim = (body - 4) / (4 * c.rows);
      throw ShapeMismatchError(origin + ": header declares dim " + std::to_string(c.dim) +
                               " but payload holds " + std::to_string(actual_dim) +
                               " values per row");
    }
    throw ChecksumError(origin + ": payload length " + std::to_string(body) +
                        " bytes inconsistent with header (" + std::to_string(expected) +
                        " expected); file truncated or corrupt");
  }
  const unsigned char* payload = buf.data() + kHeaderBytes;
  const std::size_t payload_bytes = 4 * c.rows * c.dim;
  const auto stored = detail::get_le<std::uint32_t>(payload + payload_bytes);
  const auto actual = detail::crc32_of(payload, payload_bytes);
  if (stored != actual) throw ChecksumError(origin + ": CRC32 mismatch");

  c.data.resize(static_cast<Index>(c.rows), static_cast<Index>(c.dim));
  const unsigned char* p = payload;
  for (Index r = 0; r < c.data.rows(); ++r)
    for (Index k = 0; k < c.data.cols(); ++k, p += 4) {
      const auto bits = detail::get_le<std::uint32_t>(p);
      float v;
      std::memcpy(&v, &bits, 4);
      c.data(r, k) = v;
    }
  return c;
}

inline Container read_container(const std::filesystem::path& path,
                                std::optional<LevelCode> expect = std::nullopt) {
  if (!std::filesystem::exists(path)) throw LoadError("missing file " + path.string());
  return decode(read_bytes(path), path.string(), expect);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace neurostage::io

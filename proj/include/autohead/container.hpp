#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace autohead::io {

// Versioned binary record:
//   4-byte magic | u32 version | u64 text length | UTF-8 text | u64 value count | f64 values
// All integers and doubles little-endian. The text holds structure (JSON),
// the payload holds every number that must survive bit-exactly.
struct Container {
  std::string magic;
  std::uint32_t version = 1;
  std::string text;
  std::vector<double> payload;
};

void write_container(std::ostream& out, const Container& c);

/// Throws DataError on wrong magic, version mismatch or truncation.
Container read_container(std::istream& in, std::string_view expected_magic, std::uint32_t expected_version);

void write_container_file(const std::filesystem::path& path, const Container& c);
Container read_container_file(const std::filesystem::path& path, std::string_view expected_magic,
                              std::uint32_t expected_version);

/// Cursor over a payload; throws DataError when reading past the end.
class PayloadReader {
 public:
  explicit PayloadReader(const std::vector<double>& payload) : payload_(payload) {}
  double next();
  std::vector<double> take(std::size_t n);
  bool done() const noexcept { return pos_ == payload_.size(); }

 private:
  const std::vector<double>& payload_;
  std::size_t pos_ = 0;
};

/// 64-bit FNV-1a over raw bytes, used for manifest checksums.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace autohead::io

#include "autohead/container.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "autohead/error.hpp"

namespace autohead::io {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("truncated container");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("truncated container");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_container(std::ostream& out, const Container& c) {
  if (c.magic.size() != 4) throw ConfigError("container magic must be 4 bytes");
  out.write(c.magic.data(), 4);
  put_u32(out, c.version);
  put_u64(out, c.text.size());
  out.write(c.text.data(), static_cast<std::streamsize>(c.text.size()));
  put_u64(out, c.payload.size());
  for (double v : c.payload) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Container read_container(std::istream& in, std::string_view expected_magic, std::uint32_t expected_version) {
  Container c;
  c.magic.resize(4);
  if (!in.read(c.magic.data(), 4)) throw DataError("truncated container header");
  if (c.magic != expected_magic) {
    throw DataError("bad magic '" + c.magic + "', expected '" + std::string(expected_magic) + "'");
  }
  c.version = get_u32(in);
  if (c.version != expected_version) {
    throw DataError(std::string(expected_magic) + " version " + std::to_string(c.version) + " is not supported (expected " +
                    std::to_string(expected_version) + ")");
  }
  const auto text_len = get_u64(in);
  if (text_len > (1ULL << 32)) throw DataError("implausible container text length");
  c.text.resize(text_len);
  if (text_len && !in.read(c.text.data(), static_cast<std::streamsize>(text_len))) {
    throw DataError("truncated container text");
  }
  const auto count = get_u64(in);
  if (count > (1ULL << 34)) throw DataError("implausible container payload length");
  c.payload.resize(count);
  for (auto& v : c.payload) v = std::bit_cast<double>(get_u64(in));
  return c;
}

void write_container_file(const std::filesystem::path& path, const Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_container(out, c);
  if (!out) throw DataError("write failed for " + path.string());
}

Container read_container_file(const std::filesystem::path& path, std::string_view expected_magic,
                              std::uint32_t expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_container(in, expected_magic, expected_version);
}

double PayloadReader::next() {
  if (pos_ >= payload_.size()) throw DataError("container payload is shorter than its description");
  return payload_[pos_++];
}

std::vector<double> PayloadReader::take(std::size_t n) {
  if (payload_.size() - pos_ < n) throw DataError("container payload is shorter than its description");
  std::vector<double> out(payload_.begin() + static_cast<std::ptrdiff_t>(pos_),
                          payload_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace autohead::io

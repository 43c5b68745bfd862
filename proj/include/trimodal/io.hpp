#pragma once

// Little-endian binary IO with explicit byte assembly, so files written on
// one platform load on any other. Short reads surface as FormatError.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "trimodal/errors.hpp"

namespace trimodal::io {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw FormatError(FormatError::Kind::Io, "write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const std::string& what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(FormatError::Kind::Truncated, "truncated while reading " + what, what);
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

inline std::uint8_t read_u8(std::istream& is, const std::string& what) {
  std::uint8_t v;
  read_bytes(is, &v, 1, what);
  return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  read_bytes(is, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  read_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline float read_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(read_u32(is, what));
}
inline double read_f64(std::istream& is, const std::string& what) {
  return std::bit_cast<double>(read_u64(is, what));
}

inline void write_f32_vec(std::ostream& os, const std::vector<float>& v) {
  for (float x : v) write_f32(os, x);
}
inline void write_u32_vec(std::ostream& os, const std::vector<std::uint32_t>& v) {
  for (std::uint32_t x : v) write_u32(os, x);
}
inline void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) write_f64(os, x);
}

inline std::vector<float> read_f32_vec(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<float> v(n);
  for (auto& x : v) x = read_f32(is, what);
  return v;
}
inline std::vector<std::uint32_t> read_u32_vec(std::istream& is, std::size_t n,
                                               const std::string& what) {
  std::vector<std::uint32_t> v(n);
  for (auto& x : v) x = read_u32(is, what);
  return v;
}
inline std::vector<double> read_f64_vec(std::istream& is, std::size_t n, const std::string& what) {
  std::vector<double> v(n);
  for (auto& x : v) x = read_f64(is, what);
  return v;
}

// Length-prefixed strings; the cap guards corrupt lengths from huge allocs.
inline void write_string(std::ostream& os, const std::string& s) {
  if (s.size() > 0xFFFF) throw ContractError("string field too long to serialize");
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, const std::string& what) {
  std::uint32_t n = read_u32(is, what + " length");
  if (n > 0xFFFF)
    throw FormatError(FormatError::Kind::InvalidData,
                      what + ": string length " + std::to_string(n) + " exceeds cap");
  std::string s(n, '\0');
  if (n > 0) read_bytes(is, s.data(), n, what);
  return s;
}

// 4-byte section/file tags.
inline void write_tag(std::ostream& os, const char* tag) { write_bytes(os, tag, 4); }

inline std::string read_tag(std::istream& is, const std::string& what) {
  char b[4];
  read_bytes(is, b, 4, what);
  return std::string(b, 4);
}

inline void expect_magic(std::istream& is, const std::string& magic, const std::string& file_kind) {
  std::string got = read_tag(is, file_kind + " magic");
  if (got != magic)
    throw FormatError(FormatError::Kind::BadMagic,
                      file_kind + ": bad magic '" + got + "', expected '" + magic + "'");
}

inline void expect_version(std::istream& is, std::uint32_t want, const std::string& file_kind) {
  std::uint32_t got = read_u32(is, file_kind + " version");
  if (got != want)
    throw FormatError(FormatError::Kind::BadVersion,
                      file_kind + ": unsupported version " + std::to_string(got) + ", expected " +
                          std::to_string(want));
}

// Section = tag + u64 payload byte count.
inline void write_section_header(std::ostream& os, const char* tag, std::uint64_t payload_bytes) {
  write_tag(os, tag);
  write_u64(os, payload_bytes);
}

inline void expect_section(std::istream& is, const std::string& tag, std::uint64_t payload_bytes) {
  std::string got = read_tag(is, "section tag");
  if (got != tag)
    throw FormatError(FormatError::Kind::BadSection,
                      "section '" + got + "' where '" + tag + "' expected", tag);
  std::uint64_t len = read_u64(is, "section '" + tag + "' length");
  if (len != payload_bytes)
    throw FormatError(FormatError::Kind::BadSection,
                      "section '" + tag + "' length " + std::to_string(len) + ", expected " +
                          std::to_string(payload_bytes),
                      tag);
}

// Variant for sections whose payload length is data-dependent: checks the tag
// and returns the recorded byte count for the caller to verify after parsing.
inline std::uint64_t open_section(std::istream& is, const std::string& tag) {
  std::string got = read_tag(is, "section tag");
  if (got != tag)
    throw FormatError(FormatError::Kind::BadSection,
                      "section '" + got + "' where '" + tag + "' expected", tag);
  return read_u64(is, "section '" + tag + "' length");
}

inline void expect_eof(std::istream& is, const std::string& file_kind) {
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError(FormatError::Kind::BadSection, file_kind + ": trailing bytes after last section");
}

}  // namespace trimodal::io

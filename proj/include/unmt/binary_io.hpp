#pragma once

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "unmt/common.hpp"

namespace unmt::io {

// Little-endian fixed-width encoding regardless of host byte order.
template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  UNMT_CHECK(in.gcount() == static_cast<std::streamsize>(sizeof(T)), "unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  auto n = get<std::uint32_t>(in);
  UNMT_CHECK(n < (1u << 24), "string length " << n << " is implausible");
  std::string s(n, '\0');
  in.read(s.data(), n);
  UNMT_CHECK(in.gcount() == static_cast<std::streamsize>(n), "unexpected end of file");
  return s;
}

inline void put_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  UNMT_CHECK(got == magic, what << ": bad magic bytes");
}

}  // namespace unmt::io

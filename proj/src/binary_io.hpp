#pragma once

// Little-endian helpers shared by the TFF1/TFM1/bank readers and writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "teff/errors.hpp"

namespace teff::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void write_array(std::ostream& out, std::span<const T> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
T read_pod(std::istream& in, std::string_view what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw FormatError("truncated payload while reading " + std::string(what));
  return value;
}

template <typename T>
void read_array(std::istream& in, std::span<T> values, std::string_view what) {
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes())))
    throw FormatError("truncated payload while reading " + std::string(what));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  char buf[4] = {};
  if (!in.read(buf, 4)) throw FormatError("file too short for magic header");
  if (std::string_view(buf, 4) != magic)
    throw FormatError("bad magic '" + std::string(buf, 4) + "', expected '" +
                      std::string(magic) + "'");
}

}  // namespace teff::detail

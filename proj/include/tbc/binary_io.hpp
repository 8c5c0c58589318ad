#pragma once

// Little-endian primitives shared by field snapshots and solver checkpoints.

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tbc/errors.hpp"

namespace tbc {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw Error("binary write failed");
  }

  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  void complex(std::complex<double> v) {
    f64(v.real());
    f64(v.imag());
  }

  void complex_array(std::span<const std::complex<double>> v) {
    u64(v.size());
    for (const auto& c : v) complex(c);
  }

 private:
  template <typename U>
  void put_le(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(U));
  }

  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is_) throw Error("binary read failed: truncated input");
  }

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::complex<double> complex() {
    const double re = f64();
    return {re, f64()};
  }

  std::vector<std::complex<double>> complex_array(std::uint64_t limit = (1ULL << 34)) {
    const std::uint64_t n = u64();
    if (n > limit) throw Error("binary read: implausible array length");
    std::vector<std::complex<double>> v(n);
    for (auto& c : v) c = complex();
    return v;
  }

 private:
  template <typename U>
  U get_le() {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& is_;
};

}  // namespace tbc

#pragma once

// Field snapshots (TBCF) and CSV slices.
//
// TBCF layout, little-endian:
//   "TBCF" | version u32 = 1 | dim u32 | extents u64 x dim | h f64 | tau f64 |
//   step i64 | count u64 | (re f64, im f64) x count

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "tbc/binary_io.hpp"
#include "tbc/errors.hpp"
#include "tbc/grid.hpp"

namespace tbc {

struct FieldSnapshot {
  ComplexField field;
  double h = 0.0;
  double tau = 0.0;
  std::int64_t step = 0;
};

inline void write_snapshot(std::ostream& os, const FieldSnapshot& s) {
  BinaryWriter w(os);
  w.bytes("TBCF", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(s.field.dim()));
  for (std::size_t e : s.field.extents()) w.u64(e);
  w.f64(s.h);
  w.f64(s.tau);
  w.i64(s.step);
  w.complex_array(s.field.data());
}

inline FieldSnapshot read_snapshot(std::istream& is) {
  BinaryReader r(is);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "TBCF") throw ConfigError("snapshot: bad magic");
  if (r.u32() != 1) throw ConfigError("snapshot: unsupported version");
  const std::uint32_t dim = r.u32();
  if (dim < 1 || dim > 3) throw ConfigError("snapshot: bad dimension");
  std::vector<std::size_t> ext(dim);
  std::uint64_t expect = 1;
  for (auto& e : ext) {
    const std::uint64_t v = r.u64();
    if (v == 0 || v > (1ULL << 20)) throw ConfigError("snapshot: bad extent");
    e = static_cast<std::size_t>(v);
    expect *= v;
  }
  FieldSnapshot s;
  s.h = r.f64();
  s.tau = r.f64();
  s.step = r.i64();
  std::vector<cplx> data = r.complex_array(expect);
  if (data.size() != expect) throw ConfigError("snapshot: data length does not match the extents");
  s.field = ComplexField(ext, std::move(data));
  return s;
}

inline void save_snapshot(const std::filesystem::path& path, const FieldSnapshot& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_snapshot(os, s);
}

inline FieldSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_snapshot(is);
}

/**
 * Writes x,y,z,re,im,abs2 rows. In 3D only the plane where `normal_axis`
 * sits at its middle index is written; 1D and 2D fields are written whole.
 */
inline void write_slice_csv(std::ostream& os, const GridSpec& grid, std::span<const cplx> field,
                            int normal_axis = 1) {
  if (field.size() != grid.node_count()) throw ArgumentError("slice: field does not match the grid");
  if (normal_axis < 0 || normal_axis > 2) throw ArgumentError("slice: normal axis must be 0, 1 or 2");
  const auto n = static_cast<std::size_t>(grid.nodes_per_axis());
  const std::size_t mid = n / 2;
  os << "x,y,z,re,im,abs2\n" << std::setprecision(10);
  double xyz[3];
  for (std::size_t p = 0; p < field.size(); ++p) {
    if (grid.dim() == 3) {
      const std::size_t strides[3] = {n * n, n, 1};
      if ((p / strides[normal_axis]) % n != mid) continue;
    }
    node_coords(grid, p, xyz);
    os << xyz[0] << ',' << xyz[1] << ',' << xyz[2] << ',' << field[p].real() << ',' << field[p].imag() << ','
       << std::norm(field[p]) << '\n';
  }
}

}  // namespace tbc

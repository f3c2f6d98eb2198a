#ifndef SMOLNN_SERIES_IO_HPP_
#define SMOLNN_SERIES_IO_HPP_

// SMOL1 binary layout (native little-endian):
//   "SMOL1" | u64 n | u64 steps | f64 dt | (steps + 1) * n f64, row-major
// Row 0 is the state at t = 0.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>

#include "smolnn/error.hpp"
#include "smolnn/integrator.hpp"

namespace smolnn {

inline constexpr std::array<char, 5> kSeriesMagic{'S', 'M', 'O', 'L', '1'};

inline void write_series(const DensitySeries& s, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  const std::uint64_t n = s.n;
  const std::uint64_t steps = s.steps();
  os.write(kSeriesMagic.data(), kSeriesMagic.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&steps), sizeof steps);
  os.write(reinterpret_cast<const char*>(&s.dt), sizeof s.dt);
  os.write(reinterpret_cast<const char*>(s.data.data()),
           static_cast<std::streamsize>(s.data.size() * sizeof(double)));
  if (!os) throw IoError("write failed: " + path.string());
}

inline DensitySeries read_series(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  std::array<char, 5> magic{};
  std::uint64_t n = 0, steps = 0;
  double dt = 0.0;
  is.read(magic.data(), magic.size());
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&steps), sizeof steps);
  is.read(reinterpret_cast<char*>(&dt), sizeof dt);
  if (!is || magic != kSeriesMagic) throw IoError("not a SMOL1 file: " + path.string());
  if (n == 0 || !(dt > 0.0) || n > (std::uint64_t{1} << 32) || steps > (std::uint64_t{1} << 32)) {
    throw IoError("corrupt SMOL1 header: " + path.string());
  }
  const auto bytes = std::filesystem::file_size(path);
  const auto expected = 5 + 2 * sizeof(std::uint64_t) + sizeof(double) + (steps + 1) * n * sizeof(double);
  if (bytes != expected) throw IoError("truncated or oversized SMOL1 payload: " + path.string());
  DensitySeries s;
  s.n = n;
  s.dt = dt;
  s.data.resize((steps + 1) * n);
  is.read(reinterpret_cast<char*>(s.data.data()),
          static_cast<std::streamsize>(s.data.size() * sizeof(double)));
  if (!is) throw IoError("truncated SMOL1 payload: " + path.string());
  return s;
}

/// Plot-ready CSV: t, M, then one column per requested size.
inline void write_series_csv(const DensitySeries& s, std::span<const std::size_t> sizes,
                             std::ostream& os) {
  os << "t,M";
  for (auto k : sizes) {
    if (k == 0 || k > s.n) throw ConfigError("csv export: size " + std::to_string(k) + " out of range");
    os << ",c_" << k;
  }
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    os << s.time(i) << ',' << mass(s.row(i));
    for (auto k : sizes) os << ',' << s.at(i, k);
    os << '\n';
  }
}

}  // namespace smolnn

#endif  // SMOLNN_SERIES_IO_HPP_

#pragma once

#include <iosfwd>
#include <string>

#include "rlrt/forward_sim.hpp"

namespace rlrt {

// On-disk layout: "RLRT", u32 version (1), u64 rows, u64 cols, then
// rows * cols little-endian IEEE-754 doubles in row-major order.
inline constexpr std::uint32_t kMatrixFormatVersion = 1;

void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is, const std::string& what = "stream");

/// Throw IoError naming the path on any open/read/write failure or a
/// malformed header.
void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);

}  // namespace rlrt

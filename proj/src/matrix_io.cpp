#include "rlrt/matrix_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

#include "rlrt/errors.hpp"

namespace rlrt {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'L', 'R', 'T'};

template <typename U>
void put_le(std::vector<unsigned char>& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(p[i]) << (8 * i);
  return v;
}

void read_exact(std::istream& is, unsigned char* dst, std::size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(dst), std::streamsize(n));
  if (std::size_t(is.gcount()) != n) throw IoError(what + ": truncated matrix file");
}

}  // namespace

void write_matrix(std::ostream& os, const Matrix& m) {
  std::vector<unsigned char> buf;
  buf.reserve(24 + 8 * std::size_t(m.size()));
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(buf, kMatrixFormatVersion);
  put_le<std::uint64_t>(buf, std::uint64_t(m.rows()));
  put_le<std::uint64_t>(buf, std::uint64_t(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(m(r, c)));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!os) throw IoError("write_matrix: stream write failed");
}

Matrix read_matrix(std::istream& is, const std::string& what) {
  unsigned char head[24];
  read_exact(is, head, sizeof head, what);
  if (std::memcmp(head, kMagic.data(), kMagic.size()) != 0) throw IoError(what + ": bad magic, not an RLRT matrix");
  const auto version = get_le<std::uint32_t>(head + 4);
  if (version != kMatrixFormatVersion) {
    throw IoError(what + ": unsupported matrix format version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint64_t>(head + 8);
  const auto cols = get_le<std::uint64_t>(head + 16);
  constexpr auto kMaxEntries = std::uint64_t(1) << 34;
  if ((cols != 0 && rows > kMaxEntries / cols) || rows > std::uint64_t(std::numeric_limits<Eigen::Index>::max())) {
    throw IoError(what + ": implausible matrix shape " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<unsigned char> body(8 * rows * cols);
  read_exact(is, body.data(), body.size(), what);
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(what + ": trailing bytes after matrix data");

  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const unsigned char* p = body.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c, p += 8) m(r, c) = std::bit_cast<double>(get_le<std::uint64_t>(p));
  }
  return m;
}

void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_matrix(os, m);
  os.close();
  if (!os) throw IoError("failed writing '" + path + "'");
}

Matrix load_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_matrix(is, path);
}

}  // namespace rlrt

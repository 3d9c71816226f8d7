#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace xmdiff::io {

// Flat container of named double matrices. Layout (all little-endian):
//   magic "XMTB", u32 version, u64 entry count,
//   per entry: u32 name length, name bytes, u64 rows, u64 cols,
//              rows*cols f64 values in row-major order.
inline constexpr std::uint32_t kTensorContainerVersion = 1;

using TensorMap = std::map<std::string, Eigen::MatrixXd>;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor container truncated");
  return v;
}
}  // namespace detail

inline void save_tensors(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write("XMTB", 4);
  detail::write_pod<std::uint32_t>(os, kTensorContainerVersion);
  detail::write_pod<std::uint64_t>(os, tensors.size());
  for (const auto& [name, m] : tensors) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) detail::write_pod<double>(os, m(i, j));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TensorMap load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "XMTB", 4) != 0)
    throw std::runtime_error("not a tensor container: " + path);
  auto version = detail::read_pod<std::uint32_t>(is);
  if (version > kTensorContainerVersion)
    throw std::runtime_error("tensor container version " + std::to_string(version) + " is newer than supported");
  auto count = detail::read_pod<std::uint64_t>(is);
  TensorMap out;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("tensor container truncated");
    auto rows = detail::read_pod<std::uint64_t>(is);
    auto cols = detail::read_pod<std::uint64_t>(is);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = detail::read_pod<double>(is);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace xmdiff::io

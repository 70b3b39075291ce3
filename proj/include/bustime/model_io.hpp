#pragma once

// Flat binary container for model parameters.
//
//   magic      8 bytes  "BTMODEL\0"
//   version    u32
//   kind       u32
//   anchors    u64      anchor count n
//   arrays     u64      number of named arrays
//   per array: u32 name length, name bytes, u64 rows, u64 cols,
//              rows*cols f64 in row-major order
//
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bustime/error.hpp"

namespace bustime {

inline constexpr std::array<char, 8> kModelMagic{'B', 'T', 'M', 'O', 'D', 'E', 'L', '\0'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct NamedArray {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;  // row-major
};

class ParamArchive {
 public:
  std::uint32_t kind = 0;
  std::uint64_t anchor_count = 0;
  std::vector<NamedArray> arrays;

  void add(std::string name, std::uint64_t rows, std::uint64_t cols, std::vector<double> data) {
    if (data.size() != rows * cols)
      throw Error(ErrorCode::kInvalidArgument, "array '" + name + "' size mismatch");
    arrays.push_back({std::move(name), rows, cols, std::move(data)});
  }
  void add_vector(std::string name, std::span<const double> v) {
    add(std::move(name), v.size(), 1, {v.begin(), v.end()});
  }
  void add_scalar(std::string name, double v) { add(std::move(name), 1, 1, {v}); }
  void add_matrix(std::string name, const Eigen::MatrixXd& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    add(std::move(name), static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()),
        std::move(data));
  }

  const NamedArray& get(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw Error(ErrorCode::kBadModelFile, "model file lacks array '" + name + "'");
  }
  double scalar(const std::string& name) const {
    const auto& a = get(name);
    if (a.data.size() != 1) throw Error(ErrorCode::kBadModelFile, "'" + name + "' is not a scalar");
    return a.data[0];
  }
  std::vector<double> vector(const std::string& name) const { return get(name).data; }
  Eigen::MatrixXd matrix(const std::string& name) const {
    const auto& a = get(name);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
    for (std::uint64_t r = 0; r < a.rows; ++r)
      for (std::uint64_t c = 0; c < a.cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a.data[r * a.cols + c];
    return m;
  }
};

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U)))
    throw Error(ErrorCode::kBadModelFile, path.string() + ": truncated model file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_archive(const std::filesystem::path& path, const ParamArchive& archive) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritableDirectory, "cannot write " + path.string());
  out.write(kModelMagic.data(), kModelMagic.size());
  detail::put_le<std::uint32_t>(out, kModelFormatVersion);
  detail::put_le<std::uint32_t>(out, archive.kind);
  detail::put_le<std::uint64_t>(out, archive.anchor_count);
  detail::put_le<std::uint64_t>(out, archive.arrays.size());
  for (const auto& a : archive.arrays) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put_le<std::uint64_t>(out, a.rows);
    detail::put_le<std::uint64_t>(out, a.cols);
    for (double v : a.data) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error(ErrorCode::kUnwritableDirectory, "write failure on " + path.string());
}

inline ParamArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open model file " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kModelMagic)
    throw Error(ErrorCode::kBadModelFile, path.string() + ": not a model file");
  const auto version = detail::get_le<std::uint32_t>(in, path);
  if (version != kModelFormatVersion)
    throw Error(ErrorCode::kBadModelFile,
                path.string() + ": unsupported model format version " + std::to_string(version));
  ParamArchive archive;
  archive.kind = detail::get_le<std::uint32_t>(in, path);
  archive.anchor_count = detail::get_le<std::uint64_t>(in, path);
  const auto count = detail::get_le<std::uint64_t>(in, path);
  if (count > 1024) throw Error(ErrorCode::kBadModelFile, path.string() + ": implausible array count");
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    const auto len = detail::get_le<std::uint32_t>(in, path);
    if (len > 256) throw Error(ErrorCode::kBadModelFile, path.string() + ": implausible name length");
    a.name.resize(len);
    if (!in.read(a.name.data(), len))
      throw Error(ErrorCode::kBadModelFile, path.string() + ": truncated model file");
    a.rows = detail::get_le<std::uint64_t>(in, path);
    a.cols = detail::get_le<std::uint64_t>(in, path);
    if (a.rows > (1ull << 28) || a.cols > (1ull << 28) || a.rows * a.cols > (1ull << 28))
      throw Error(ErrorCode::kBadModelFile, path.string() + ": implausible array shape");
    a.data.resize(a.rows * a.cols);
    for (auto& v : a.data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, path));
    archive.arrays.push_back(std::move(a));
  }
  return archive;
}

}  // namespace bustime

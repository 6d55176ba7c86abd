#include "core/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace modec {
namespace {

constexpr char kMagic[4] = {'M', 'D', 'G', '1'};

// FP64 LE payloads are written verbatim; this code targets little-endian
// hosts and the reader checks the magic, not the byte order.
static_assert(sizeof(double) == 8, "FP64 payload requires 8-byte double");

[[noreturn]] void io_fail(const std::filesystem::path& path, const std::string& what) {
  fail(ErrorCode::IoError, path.string() + ": " + what);
}

void write_file_atomic(const std::filesystem::path& path,
                       const void* bytes, std::size_t size) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) io_fail(tmp, "cannot open for writing");
    out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(size));
    if (!out) io_fail(tmp, "short write");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) io_fail(path, "rename failed: " + ec.message());
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::uint64_t count = 1;
  for (std::uint64_t d : t.dims) count *= d;
  if (count != t.data.size())
    fail(ErrorCode::ShapeMismatch, "tensor data length does not match dims");

  std::string buf;
  buf.reserve(4 + 4 + 8 * t.dims.size() + 8 * t.data.size());
  buf.append(kMagic, 4);
  std::uint32_t ndim = static_cast<std::uint32_t>(t.dims.size());
  buf.append(reinterpret_cast<const char*>(&ndim), 4);
  for (std::uint64_t d : t.dims) buf.append(reinterpret_cast<const char*>(&d), 8);
  buf.append(reinterpret_cast<const char*>(t.data.data()), 8 * t.data.size());
  write_file_atomic(path, buf.data(), buf.size());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) io_fail(path, "bad magic");

  std::uint32_t ndim = 0;
  in.read(reinterpret_cast<char*>(&ndim), 4);
  if (!in || ndim > 8) io_fail(path, "bad dimension count");

  Tensor t;
  t.dims.resize(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    in.read(reinterpret_cast<char*>(&t.dims[i]), 8);
    if (!in) io_fail(path, "truncated header");
    count *= t.dims[i];
  }
  if (count > (1ull << 32)) io_fail(path, "tensor too large");

  t.data.resize(count);
  in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(8 * count));
  if (!in) io_fail(path, "truncated payload");
  for (double v : t.data)
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, path.string() + ": non-finite tensor entry");
  return t;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      t.data[static_cast<std::size_t>(r) * m.cols() + c] = m(r, c);
  write_tensor(path, t);
}

Matrix read_matrix(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 2) io_fail(path, "expected a 2-d tensor");
  Matrix m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      m(r, c) = t.data[static_cast<std::size_t>(r) * m.cols() + c];
  return m;
}

void write_vector(const std::filesystem::path& path, const Vector& v) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  write_tensor(path, t);
}

Vector read_vector(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 1) io_fail(path, "expected a 1-d tensor");
  Vector v(static_cast<int>(t.dims[0]));
  for (int i = 0; i < v.size(); ++i) v(i) = t.data[static_cast<std::size_t>(i)];
  return v;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace modec

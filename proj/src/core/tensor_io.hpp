#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/matrix.hpp"

namespace modec {

// Binary tensor blob: magic "MDG1", u32 LE ndim, ndim u64 LE dims, then the
// payload as row-major FP64 LE. Written atomically (temp file + rename).
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // row-major
};

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

void write_vector(const std::filesystem::path& path, const Vector& v);
Vector read_vector(const std::filesystem::path& path);

// Atomic text write used for JSON manifests and reports.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace modec

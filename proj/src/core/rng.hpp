#pragma once

#include <cstdint>
#include <random>

#include "core/matrix.hpp"

namespace modec {

// Seeded RNG with a fixed fill order so every draw sequence is reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }

  double uniform() { return uniform_(engine_); }

  // Row-major fill so the draw order is independent of the storage layout.
  Matrix gaussian_matrix(int rows, int cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = stddev * gaussian();
    return m;
  }

  Vector gaussian_vector(int n, double stddev = 1.0) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = stddev * gaussian();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace modec

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace trendbal {

/// Platform-stable random source: std::mt19937_64 (whose output sequence is
/// fixed by the C++ standard), uniforms from the top 53 bits of each draw,
/// and normals by the Box-Muller transform. std::normal_distribution is
/// deliberately not used because its algorithm is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal.
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace trendbal

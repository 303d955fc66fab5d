#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nhdiff {

// Chart coordinates u = (x1, x2, y3, y4); indices 0,1 are horizontal, 2,3 vertical.
using ChartPoint = std::array<double, 4>;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// T[c](a, b) holds a three-index object T^c_{ab}.
using Tensor3 = std::array<Mat4, 4>;

inline constexpr int kDim = 4;
inline constexpr std::array<int, 2> kH{0, 1};
inline constexpr std::array<int, 2> kV{2, 3};

inline bool is_horizontal(int idx) { return idx < 2; }

inline Tensor3 zero_tensor3() {
  Tensor3 t;
  for (auto& m : t) m.setZero();
  return t;
}

inline double max_abs(const Tensor3& t) {
  double m = 0.0;
  for (const auto& s : t) m = std::max(m, s.cwiseAbs().maxCoeff());
  return m;
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown by a named check whose criterion is not met.
class CheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nhdiff

#pragma once

#include <Eigen/Dense>

#include <array>

namespace dhm {

using quad = __float128;

// 3x3 matrix in binary128, enough for long products of group elements whose
// entries reach 1e5.
struct QuadMatrix3 {
  std::array<quad, 9> a{};

  static QuadMatrix3 identity() {
    QuadMatrix3 m;
    m(0, 0) = m(1, 1) = m(2, 2) = 1;
    return m;
  }
  static QuadMatrix3 from(const Eigen::Matrix<long double, 3, 3>& m) {
    QuadMatrix3 q;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) q(i, j) = m(i, j);
    return q;
  }

  quad& operator()(int i, int j) { return a[static_cast<std::size_t>(3 * i + j)]; }
  quad operator()(int i, int j) const { return a[static_cast<std::size_t>(3 * i + j)]; }

  QuadMatrix3 operator*(const QuadMatrix3& b) const {
    QuadMatrix3 c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = (*this)(i, 0) * b(0, j) + (*this)(i, 1) * b(1, j) + (*this)(i, 2) * b(2, j);
    return c;
  }
  QuadMatrix3 operator-(const QuadMatrix3& b) const {
    QuadMatrix3 c;
    for (std::size_t k = 0; k < 9; ++k) c.a[k] = a[k] - b.a[k];
    return c;
  }
  // J M^T J with J = diag(1, 1, -1): the inverse of a Lorentz matrix.
  QuadMatrix3 lorentz_inverse() const {
    QuadMatrix3 c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c(i, j) = ((i == 2) != (j == 2) ? -1 : 1) * (*this)(j, i);
    return c;
  }
  quad trace() const { return a[0] + a[4] + a[8]; }
  quad max_abs() const {
    quad m = 0;
    for (quad x : a) m = x < 0 ? (-x > m ? -x : m) : (x > m ? x : m);
    return m;
  }
  Eigen::Matrix<long double, 3, 3> to_long_double() const {
    Eigen::Matrix<long double, 3, 3> m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = static_cast<long double>((*this)(i, j));
    return m;
  }
};

} // namespace dhm

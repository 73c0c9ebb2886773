#pragma once

#include <Eigen/Dense>
#include <cstddef>

namespace rirpinn::fastmath {

// Vectorizable sin/cos/tanh for the activation hot loops. Eigen's double
// sin()/tanh() fall back to scalar libm on this toolchain (~19 ns/element);
// these run close to 1 ns/element under -march=native with max abs error
// ~2 ulp. Arguments are expected in a moderate range (|x| up to ~1e6); the
// three-term Cody-Waite reduction holds well past that.
void sincos(const double* x, double* s, double* c, std::ptrdiff_t n);
void sin_only(const double* x, double* s, std::ptrdiff_t n);
void tanh(const double* x, double* y, std::ptrdiff_t n);

// Column-wise application over equal-shaped matrices (handles the column
// stride of block expressions by going one column at a time).
void sincos_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
                Eigen::Ref<Eigen::MatrixXd> s, Eigen::Ref<Eigen::MatrixXd> c);
// Bit-identical to the sine half of sincos (same reduction and polynomials).
void sin_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
             Eigen::Ref<Eigen::MatrixXd> s);
void tanh_mat(const Eigen::Ref<const Eigen::MatrixXd>& x,
              Eigen::Ref<Eigen::MatrixXd> y);

}  // namespace rirpinn::fastmath

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

namespace blstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

// Relative threshold below which singular values count as zero.
inline constexpr double kRankRelTol = 1e-9;

bool is_symmetric(const Matrix& a, double tol = 1e-12);
Matrix symmetrize(const Matrix& a);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& a);
bool is_positive_definite(const Matrix& a, double tol = 0.0);

// Largest singular value.
double operator_norm(const Matrix& a);

int numerical_rank(const Matrix& a, double rel_tol = kRankRelTol);

// Orthonormal basis of the row space, as rows. Empty (0 x cols) for rank 0.
Matrix orthonormal_row_basis(const Matrix& a, double rel_tol = kRankRelTol);

// Orthonormal basis of the null space {x : a x = 0}, as rows.
Matrix null_space_basis(const Matrix& a, double rel_tol = kRankRelTol);

// Symmetric positive-definite square root and inverse square root.
Matrix spd_sqrt(const Matrix& a);
Matrix spd_inv_sqrt(const Matrix& a);

double log_det_spd(const Matrix& a);

// det(S)^{-1/2} for complex symmetric S with positive-definite real part,
// on the branch continuous from real positive-definite matrices: the
// eigenvalues of such S lie in the open right half-plane, so the product of
// principal reciprocal square roots is well defined and single-valued.
Complex det_rsqrt(const CMatrix& s);

// log det(S) on the same branch (sum of principal logs of eigenvalues).
Complex log_det_branch(const CMatrix& s);

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    double y = x - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

struct KahanSumComplex {
  KahanSum re, im;
  void add(Complex z) {
    re.add(z.real());
    im.add(z.imag());
  }
  Complex value() const { return {re.value(), im.value()}; }
};

}  // namespace blstab

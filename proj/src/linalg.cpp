#include "blstab/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace blstab {

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_positive_definite(const Matrix& a, double tol) {
  return min_eigenvalue(a) > tol;
}

double operator_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

int numerical_rank(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double cutoff = rel_tol * sv(0);
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  return r;
}

Matrix orthonormal_row_basis(const Matrix& a, double rel_tol) {
  if (a.rows() == 0 || a.size() == 0) return Matrix(0, a.cols());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return Matrix(0, a.cols());
  const double cutoff = rel_tol * sv(0);
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  Matrix basis(r, a.cols());
  for (int i = 0; i < r; ++i) basis.row(i) = svd.matrixV().col(i).transpose();
  return basis;
}

Matrix null_space_basis(const Matrix& a, double rel_tol) {
  const int n = static_cast<int>(a.cols());
  if (a.rows() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double top = sv.size() ? sv(0) : 0.0;
  const double cutoff = rel_tol * top;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  Matrix basis(n - r, n);
  for (int i = r; i < n; ++i) basis.row(i - r) = svd.matrixV().col(i).transpose();
  return basis;
}

Matrix spd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("spd_sqrt: matrix not positive definite");
  return es.operatorSqrt();
}

Matrix spd_inv_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("spd_inv_sqrt: matrix not positive definite");
  return es.operatorInverseSqrt();
}

double log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("log_det_spd: matrix not positive definite");
  KahanSum acc;
  for (int i = 0; i < a.rows(); ++i) acc.add(std::log(llt.matrixL()(i, i)));
  return 2.0 * acc.value();
}

Complex log_det_branch(const CMatrix& s) {
  if (s.rows() != s.cols())
    throw std::invalid_argument("log_det_branch: matrix not square");
  Matrix re = 0.5 * (s.real() + s.real().transpose());
  if (min_eigenvalue(re) <= 0.0)
    throw std::invalid_argument("log_det_branch: real part not positive definite");
  Eigen::ComplexEigenSolver<CMatrix> es(s, /*computeEigenvectors=*/false);
  KahanSumComplex acc;
  for (int i = 0; i < s.rows(); ++i) acc.add(std::log(es.eigenvalues()(i)));
  return acc.value();
}

Complex det_rsqrt(const CMatrix& s) {
  return std::exp(-0.5 * log_det_branch(s));
}

}  // namespace blstab

#include "blstab/gaussian_bl.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace blstab {

namespace {
constexpr double kPi = std::numbers::pi;
}

bool GaussianTuple::has_offsets() const {
  for (const auto& v : offsets)
    if (v.size() > 0 && v.cwiseAbs().maxCoeff() > 0.0) return true;
  return false;
}

Vector GaussianTuple::offset(size_t j) const {
  if (j < offsets.size() && offsets[j].size() > 0) return offsets[j];
  return Vector::Zero(exponents[j].rows());
}

GaussianTuple GaussianTuple::identity(const Datum& datum) {
  GaussianTuple t;
  for (int j = 0; j < datum.size(); ++j)
    t.exponents.push_back(Matrix::Identity(datum.codim(j), datum.codim(j)));
  return t;
}

GaussianTuple GaussianTuple::centered(std::vector<Matrix> exponents) {
  GaussianTuple t;
  t.exponents = std::move(exponents);
  return t;
}

GaussianTuple GaussianTuple::scalars(const std::vector<double>& values) {
  GaussianTuple t;
  for (double a : values) {
    Matrix m(1, 1);
    m(0, 0) = a;
    t.exponents.push_back(m);
  }
  return t;
}

void validate_tuple(const Datum& datum, const GaussianTuple& tuple) {
  if (tuple.exponents.size() != datum.factors.size())
    throw std::invalid_argument("gaussian tuple length does not match datum");
  if (!tuple.offsets.empty() && tuple.offsets.size() != tuple.exponents.size())
    throw std::invalid_argument("gaussian tuple: offset list length mismatch");
  if (!tuple.amplitudes.empty() && tuple.amplitudes.size() != tuple.exponents.size())
    throw std::invalid_argument("gaussian tuple: amplitude list length mismatch");
  for (size_t j = 0; j < tuple.exponents.size(); ++j) {
    const auto& a = tuple.exponents[j];
    const int dj = datum.codim(static_cast<int>(j));
    if (a.rows() != dj || a.cols() != dj)
      throw std::invalid_argument("gaussian tuple: factor " + std::to_string(j) +
                                  " has wrong dimensions");
    if (!is_symmetric(a) || min_eigenvalue(a) <= 0.0)
      throw std::invalid_argument("gaussian tuple: factor " + std::to_string(j) +
                                  " is not symmetric positive definite");
    if (!tuple.offsets.empty() && tuple.offsets[j].size() > 0 &&
        tuple.offsets[j].size() != dj)
      throw std::invalid_argument("gaussian tuple: offset " + std::to_string(j) +
                                  " has wrong dimension");
  }
  for (double c : tuple.amplitudes)
    if (!(c > 0.0)) throw std::invalid_argument("gaussian tuple: amplitudes must be positive");
}

Matrix m_matrix(const Datum& datum, const GaussianTuple& tuple) {
  validate_tuple(datum, tuple);
  Matrix m = Matrix::Zero(datum.dim, datum.dim);
  for (int j = 0; j < datum.size(); ++j) {
    const Matrix& b = datum.factors[j].map;
    m += datum.q(j) * b.transpose() * tuple.exponents[j] * b;
  }
  m = symmetrize(m);
  if (min_eigenvalue(m) <= 0.0)
    throw std::invalid_argument(
        "m_matrix: result not positive definite (common kernel; BL constant infinite)");
  return m;
}

CenteredValueReport gaussian_bl_value(const Datum& datum, const GaussianTuple& tuple) {
  CenteredValueReport report;
  report.m = m_matrix(datum, tuple);
  report.min_eigenvalue = min_eigenvalue(report.m);
  report.scaling_defect = scaling_defect(datum);

  const double log_det_m = log_det_spd(report.m);
  KahanSum log_value;
  log_value.add(-0.5 * log_det_m);
  for (int j = 0; j < datum.size(); ++j)
    log_value.add(0.5 * datum.q(j) * log_det_spd(tuple.exponents[j]));
  if (std::abs(report.scaling_defect) > 1e-12) {
    log_value.add(0.5 * report.scaling_defect * std::log(kPi));
    report.pi_corrected = true;
  }
  report.value = std::exp(log_value.value());
  report.normalized = std::abs(log_det_m) <= 1e-10;
  return report;
}

double centered_blbp_p(const Datum& datum, const GaussianTuple& tuple) {
  if (tuple.has_offsets())
    throw std::invalid_argument("centered_blbp_p: tuple must be centered");
  if (std::abs(scaling_defect(datum)) > 1e-9)
    throw std::invalid_argument("centered_blbp_p: scaling condition must hold");
  GaussianTuple scaled;
  scaled.exponents.reserve(tuple.exponents.size());
  for (size_t j = 0; j < tuple.exponents.size(); ++j) {
    const double p = datum.factors[j].p;
    if (std::isinf(p))
      throw std::invalid_argument("centered_blbp_p: exponent p = inf not supported here");
    scaled.exponents.push_back(p * tuple.exponents[j]);
  }
  return gaussian_bl_value(datum, scaled).value;
}

GaussianTuple normalize_det(const Datum& datum, const GaussianTuple& tuple) {
  const Matrix m = m_matrix(datum, tuple);
  const double r = std::exp(-log_det_spd(m) / datum.dim);
  GaussianTuple out = tuple;
  for (auto& a : out.exponents) a *= r;
  return out;
}

SquareCompletion complete_square(const Datum& datum, const GaussianTuple& tuple) {
  validate_tuple(datum, tuple);
  for (double c : tuple.amplitudes)
    if (c != 1.0)
      throw std::invalid_argument("complete_square: amplitudes must be normalized to 1");
  const Matrix m = m_matrix(datum, tuple);

  Vector rhs = Vector::Zero(datum.dim);
  for (int j = 0; j < datum.size(); ++j)
    rhs += datum.q(j) * datum.factors[j].map.transpose() * tuple.exponents[j] * tuple.offset(j);

  SquareCompletion out;
  out.center = m.llt().solve(rhs);
  KahanSum log_c;
  for (int j = 0; j < datum.size(); ++j) {
    const Vector mismatch = datum.factors[j].map * out.center - tuple.offset(j);
    log_c.add(-datum.q(j) * mismatch.dot(tuple.exponents[j] * mismatch));
  }
  out.factor = std::exp(log_c.value());
  out.centered = GaussianTuple::centered(tuple.exponents);
  return out;
}

Matrix consistent_offset_subspace(const Datum& datum) {
  int total = 0;
  for (int j = 0; j < datum.size(); ++j) total += datum.codim(j);
  Matrix stacked(total, datum.dim);
  int row = 0;
  for (int j = 0; j < datum.size(); ++j) {
    stacked.block(row, 0, datum.codim(j), datum.dim) = datum.factors[j].map;
    row += datum.codim(j);
  }
  // V = range of the stacked map, inside R^{sum d_j}.
  return orthonormal_row_basis(stacked.transpose());
}

double offset_gaussian_ratio(const Datum& datum, const GaussianTuple& tuple) {
  GaussianTuple unit = tuple;
  unit.amplitudes.clear();  // ratio invariance under per-factor amplitudes
  const SquareCompletion sq = complete_square(datum, unit);
  return sq.factor * gaussian_bl_value(datum, sq.centered).value;
}

Complex modulated_blbp(const Datum& datum, const GaussianTuple& base,
                       const std::vector<Matrix>& phases) {
  validate_tuple(datum, base);
  if (base.has_offsets())
    throw std::invalid_argument("modulated_blbp: base tuple must be centered");
  if (phases.size() != base.exponents.size())
    throw std::invalid_argument("modulated_blbp: phase list length mismatch");

  const int d = datum.dim;
  CMatrix s_total = CMatrix::Zero(d, d);
  KahanSum log_norms;
  for (int j = 0; j < datum.size(); ++j) {
    const int dj = datum.codim(j);
    if (phases[j].rows() != dj || phases[j].cols() != dj || !is_symmetric(phases[j]))
      throw std::invalid_argument("modulated_blbp: phase matrices must be symmetric d_j x d_j");
    const double p = datum.factors[j].p;
    if (std::isinf(p))
      throw std::invalid_argument("modulated_blbp: exponent p = inf not supported here");
    const CMatrix s_j =
        base.exponents[j].cast<Complex>() - Complex(0.0, 1.0) * phases[j].cast<Complex>();
    const CMatrix b = datum.factors[j].map.cast<Complex>();
    s_total += b.transpose() * s_j * b;
    // ||f_j||_p = ||g_j||_p: phases drop out of the modulus.
    log_norms.add(std::log(lp_norm(centered_spec(base.exponents[j]), p)));
  }
  s_total = 0.5 * (s_total + s_total.transpose()).eval();
  if (min_eigenvalue(0.5 * (s_total.real() + s_total.real().transpose())) <= 0.0)
    throw std::invalid_argument("modulated_blbp: Re(S_total) not positive definite");
  const Complex integral = gaussian_integral(s_total, CVector::Zero(d));
  return integral * std::exp(-log_norms.value());
}

}  // namespace blstab

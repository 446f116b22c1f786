#include "blstab/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace blstab {

namespace {

constexpr double kPi = std::numbers::pi;

Matrix real_sym(const CMatrix& s) {
  Matrix re = s.real();
  return 0.5 * (re + re.transpose());
}

void check_spec(const CMatrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("gaussian: exponent must be square");
  if ((s - s.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("gaussian: exponent must be symmetric");
  if (min_eigenvalue(real_sym(s)) <= 0.0)
    throw std::invalid_argument("gaussian: Re(exponent) must be positive definite");
}

// Unconjugated bilinear form a^T M b.
Complex bilinear(const CMatrix& m, const CVector& a, const CVector& b) {
  return (a.transpose() * (m * b))(0, 0);
}

}  // namespace

ComplexGaussianSpec make_complex_gaussian(Complex amplitude, CMatrix exponent, CVector linear) {
  check_spec(exponent);
  if (linear.size() != exponent.rows())
    throw std::invalid_argument("gaussian: linear term has wrong dimension");
  if (amplitude == Complex(0.0, 0.0))
    throw std::invalid_argument("gaussian: amplitude must be nonzero");
  return ComplexGaussianSpec{amplitude, std::move(exponent), std::move(linear)};
}

ComplexGaussianSpec gaussian_spec(const RealGaussian& g) {
  // c e^{-<A(y-v),y-v>} = c e^{-<Av,v>} e^{-<Ay,y> + (2Av).y}
  const Vector av = g.exponent * g.offset;
  const double log_boost = -g.offset.dot(av);
  return make_complex_gaussian(Complex(g.amplitude * std::exp(log_boost), 0.0),
                               g.exponent.cast<Complex>(), (2.0 * av).cast<Complex>());
}

ComplexGaussianSpec centered_spec(const Matrix& exponent, double amplitude) {
  return make_complex_gaussian(Complex(amplitude, 0.0), exponent.cast<Complex>(),
                               CVector::Zero(exponent.rows()));
}

Complex gaussian_integral(const CMatrix& s, const CVector& w) {
  check_spec(s);
  const int n = static_cast<int>(s.rows());
  const Complex log_det = log_det_branch(s);
  Complex log_value = 0.5 * n * std::log(kPi) - 0.5 * log_det;
  if (w.size() != n) throw std::invalid_argument("gaussian_integral: dimension mismatch");
  if (w.cwiseAbs().maxCoeff() > 0.0) {
    const CVector s_inv_w = s.fullPivLu().solve(w);
    log_value += 0.25 * bilinear(CMatrix::Identity(n, n), s_inv_w, w);
  }
  return std::exp(log_value);
}

double lp_norm(const ComplexGaussianSpec& g, double p) {
  if (p < 1.0 || std::isnan(p)) throw std::invalid_argument("lp_norm: p must lie in [1, inf]");
  const Matrix a = real_sym(g.exponent);
  const Vector wr = g.linear.real();
  const double log_amp = std::log(std::abs(g.amplitude));
  if (std::isinf(p)) {
    // sup |g| = |c| exp(<A^{-1} w_r, w_r>/4)
    const Vector a_inv_w = a.llt().solve(wr);
    return std::exp(log_amp + 0.25 * wr.dot(a_inv_w));
  }
  const Complex integral =
      gaussian_integral((p * a).cast<Complex>(), (p * wr).cast<Complex>());
  return std::exp(log_amp + std::log(integral.real()) / p);
}

ComplexGaussianSpec fourier(const ComplexGaussianSpec& g) {
  check_spec(g.exponent);
  const int n = g.dim();
  const CMatrix s_inv = g.exponent.fullPivLu().solve(CMatrix::Identity(n, n));
  const Complex log_det = log_det_branch(g.exponent);
  // c' = c pi^{n/2} det(S)^{-1/2} e^{<S^{-1}w,w>/4}
  Complex log_boost = 0.5 * n * std::log(kPi) - 0.5 * log_det;
  if (g.linear.cwiseAbs().maxCoeff() > 0.0)
    log_boost += 0.25 * bilinear(s_inv, g.linear, g.linear);
  ComplexGaussianSpec out;
  out.amplitude = g.amplitude * std::exp(log_boost);
  out.exponent = kPi * kPi * s_inv;
  // Symmetrize roundoff before the invariant check downstream.
  out.exponent = 0.5 * (out.exponent + out.exponent.transpose()).eval();
  out.linear = Complex(0.0, -kPi) * (s_inv * g.linear);
  return out;
}

RealGaussian convert_parametrization(const Matrix& q_form, const Vector& v, double amplitude) {
  if (amplitude <= 0.0)
    throw std::invalid_argument("convert_parametrization: amplitude must be positive");
  if (!is_symmetric(q_form) || min_eigenvalue(q_form) <= 0.0)
    throw std::invalid_argument("convert_parametrization: Q must be symmetric positive definite");
  RealGaussian g;
  g.exponent = symmetrize(q_form);
  g.offset = 0.5 * g.exponent.llt().solve(v);
  g.amplitude = amplitude * std::exp(0.25 * v.dot(g.exponent.llt().solve(v)));
  return g;
}

PullbackExponent pullback_exponent(const std::vector<ComplexGaussianSpec>& tuple,
                                   const Datum& datum, const std::vector<double>& weights) {
  const size_t m = datum.factors.size();
  if (tuple.size() != m || weights.size() != m)
    throw std::invalid_argument("pullback_exponent: tuple/weight lengths must match datum");
  const int d = datum.dim;
  PullbackExponent out;
  out.exponent = CMatrix::Zero(d, d);
  out.linear = CVector::Zero(d);
  Complex log_amp(0.0, 0.0);
  for (size_t j = 0; j < m; ++j) {
    const CMatrix b = datum.factors[j].map.cast<Complex>();
    if (tuple[j].dim() != datum.codim(static_cast<int>(j)))
      throw std::invalid_argument("pullback_exponent: factor dimension mismatch");
    out.exponent += weights[j] * (b.transpose() * tuple[j].exponent * b);
    out.linear += weights[j] * (b.transpose() * tuple[j].linear);
    log_amp += weights[j] * std::log(tuple[j].amplitude);
  }
  out.exponent = 0.5 * (out.exponent + out.exponent.transpose()).eval();
  out.amplitude = std::exp(log_amp);
  return out;
}

}  // namespace blstab

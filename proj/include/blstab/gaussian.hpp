#pragma once

#include <vector>

#include "blstab/datum.hpp"
#include "blstab/linalg.hpp"

namespace blstab {

// Positive Gaussian in centered-offset form: y -> c exp(-<A(y-v), y-v>).
struct RealGaussian {
  double amplitude = 1.0;
  Matrix exponent;  // symmetric positive definite
  Vector offset;

  int dim() const { return static_cast<int>(exponent.rows()); }
  double eval(const Vector& y) const {
    const Vector delta = y - offset;
    return amplitude * std::exp(-delta.dot(exponent * delta));
  }
};

// y -> c exp(-<S y, y> + w . y) with S complex symmetric, Re(S) positive
// definite, w and c complex. The bilinear form carries no conjugation.
struct ComplexGaussianSpec {
  Complex amplitude{1.0, 0.0};
  CMatrix exponent;  // S
  CVector linear;    // w

  int dim() const { return static_cast<int>(exponent.rows()); }
  // Bilinear (unconjugated) quadratic form at a real point.
  Complex eval(const Vector& y) const {
    const Complex quad(y.dot(exponent.real() * y), y.dot(exponent.imag() * y));
    const Complex lin(linear.real().dot(y), linear.imag().dot(y));
    return amplitude * std::exp(-quad + lin);
  }
  // Membership in the complex Gaussian class (real quadratic form).
  bool in_paper_class(double tol = 1e-12) const {
    return exponent.imag().cwiseAbs().maxCoeff() <= tol;
  }
};

ComplexGaussianSpec make_complex_gaussian(Complex amplitude, CMatrix exponent, CVector linear);
ComplexGaussianSpec gaussian_spec(const RealGaussian& g);
// Centered real Gaussian e^{-<A y, y>} as a spec.
ComplexGaussianSpec centered_spec(const Matrix& exponent, double amplitude = 1.0);

// Integral over R^n of exp(-<Sx,x> + w.x):
//   pi^{n/2} det(S)^{-1/2} exp(<S^{-1}w, w>/4)
// on the det^{-1/2} branch continuous from real positive-definite S.
// Throws when Re(S) is not positive definite (divergent integral).
Complex gaussian_integral(const CMatrix& s, const CVector& w);

// Closed-form L^p norm, p in [1, inf]; depends only on |amplitude|, Re(S),
// Re(w). p = inf returns the supremum.
double lp_norm(const ComplexGaussianSpec& g, double p);

// Exact Fourier transform under f^(xi) = \int f(x) e^{-2 pi i <x,xi>} dx.
ComplexGaussianSpec fourier(const ComplexGaussianSpec& g);

// Rewrites c e^{-Q(x) + v.x} (Q positive definite) in centered-offset form by
// completing the square: v' = Q^{-1} v / 2, c' = c e^{<Q^{-1}v, v>/4}.
RealGaussian convert_parametrization(const Matrix& q_form, const Vector& v, double amplitude);

// Exponent data of x -> prod_j [f_j(B_j x)]^{weight_j} for Gaussian f_j.
struct PullbackExponent {
  CMatrix exponent;   // sum_j weight_j B_j^T S_j B_j
  CVector linear;     // sum_j weight_j B_j^T w_j
  Complex amplitude;  // prod_j c_j^{weight_j} (principal powers)
};

PullbackExponent pullback_exponent(const std::vector<ComplexGaussianSpec>& tuple,
                                   const Datum& datum, const std::vector<double>& weights);

}  // namespace blstab

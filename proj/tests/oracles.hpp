// Test-only oracles, independent of the library's quadrature and closed-form
// paths: adaptive Simpson quadrature, plain tensor midpoint sums, central
// finite differences, and grid+refine scans.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;

// Adaptive Simpson on [a, b] for complex-valued integrands.
inline Complex simpson_step(const std::function<Complex(double)>& f, double a, double b,
                            Complex fa, Complex fm, Complex fb, Complex whole, double tol,
                            int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const Complex flm = f(lm), frm = f(rm);
  const Complex left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const Complex right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline Complex adaptive_simpson(const std::function<Complex(double)>& f, double a, double b,
                                double tol = 1e-12, int depth = 40) {
  const Complex fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const Complex whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Plain midpoint tensor quadrature over [lo, hi]^d with n points per axis.
inline Complex tensor_midpoint(const std::function<Complex(const Vector&)>& f, const Vector& lo,
                               const Vector& hi, int n) {
  const int d = static_cast<int>(lo.size());
  long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  Vector h = (hi - lo) / n;
  double cell = 1.0;
  for (int i = 0; i < d; ++i) cell *= h(i);
  Complex acc(0.0, 0.0);
  Vector x(d);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = 0; i < d; ++i) {
      const int k = static_cast<int>(rem % n);
      rem /= n;
      x(i) = lo(i) + (k + 0.5) * h(i);
    }
    acc += f(x);
  }
  return acc * cell;
}

// Central finite difference of a scalar function along one coordinate.
inline double central_diff(const std::function<double(const Vector&)>& f, const Vector& x, int i,
                           double h = 1e-5) {
  Vector xp = x, xm = x;
  xp(i) += h;
  xm(i) -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

// Grid + refinement maximization of a smooth 1-d function on [lo, hi].
inline std::pair<double, double> grid_refine_max(const std::function<double(double)>& f,
                                                 double lo, double hi, int points = 400,
                                                 int rounds = 8) {
  double best_x = lo, best = -std::numeric_limits<double>::infinity();
  for (int round = 0; round < rounds; ++round) {
    const double step = (hi - lo) / (points - 1);
    for (int i = 0; i < points; ++i) {
      const double x = lo + i * step;
      const double v = f(x);
      if (v > best) {
        best = v;
        best_x = x;
      }
    }
    const double width = (hi - lo) / 8.0;
    lo = best_x - width;
    hi = best_x + width;
  }
  return {best_x, best};
}

}  // namespace oracle

#pragma once

#include <variant>
#include <vector>

#include "blstab/datum.hpp"
#include "blstab/gaussian.hpp"

namespace blstab {

// ---------------------------------------------------------------------------
// Function specifications accepted by the numeric layer.
// ---------------------------------------------------------------------------

struct SumOfGaussians {
  std::vector<ComplexGaussianSpec> terms;  // empty list is the zero function
};

// g(y) + amplitude * phi(|y - center| / radius) with the fixed C^inf bump
// phi(u) = exp(-1/(1-u^2)) on |u| < 1, zero outside.
struct GaussianPlusBump {
  ComplexGaussianSpec gaussian;
  double amplitude = 0.0;
  Vector center;
  double radius = 1.0;
};

// base(y) * exp(i <phase y, y>), phase real symmetric.
struct ModulatedGaussian {
  ComplexGaussianSpec base;
  Matrix phase;
};

// Samples on a uniform grid: node k has coordinates lo + k * spacing,
// axis-0 slowest (row-major); multilinear interpolation, zero outside.
struct GridFunction {
  Vector lo;
  double spacing = 1.0;
  std::vector<int> shape;
  std::vector<Complex> samples;

  int dim() const { return static_cast<int>(shape.size()); }
  Vector hi() const;
  Complex interpolate(const Vector& y) const;
  Vector node(long flat_index) const;  // coordinates of a sample, row-major
};

using FunctionSpec =
    std::variant<ComplexGaussianSpec, SumOfGaussians, GaussianPlusBump, GridFunction,
                 ModulatedGaussian>;

int spec_dim(const FunctionSpec& f);
Complex eval_spec(const FunctionSpec& f, const Vector& y);
bool spec_is_zero(const FunctionSpec& f);
// The modulated spec as a single complex Gaussian (S - i P).
ComplexGaussianSpec to_closed(const ModulatedGaussian& f);
double bump_profile(double u);

struct Box {
  Vector lo, hi;
  Vector widths() const { return hi - lo; }
};

// Axis-aligned box containing the region where |f| exceeds tail_tol times
// its peak (plus compact supports and grid hulls).
Box spec_box(const FunctionSpec& f, double tail_tol = 1e-14);

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

enum class QuadMethod { TensorGrid, MonteCarlo };

struct QuadratureOpts {
  int points_per_axis = 0;  // 0 selects a default by dimension; >= 16 otherwise
  double box_widen = 1.0;   // truncation radius multiplier
  QuadMethod method = QuadMethod::TensorGrid;
  long mc_samples = 200000;
  uint64_t seed = 0;  // mandatory for Monte Carlo
  double target_rel_error = 1e-6;
};

struct RealQuadResult {
  double value = 0.0;
  double error_estimate = 0.0;
  bool flagged = false;  // error estimate above target; value still returned
};

struct ComplexQuadResult {
  Complex value{0.0, 0.0};
  double error_estimate = 0.0;
  bool flagged = false;
};

// Tensor-grid quadrature of |f|^p (Richardson error estimate); closed-form
// shortcut for single complex Gaussians. p = inf returns the grid supremum.
RealQuadResult lp_norm_numeric(const FunctionSpec& f, double p,
                               const QuadratureOpts& opts = {});

// int_{R^d} prod_j f_j(B_j x) dx on a grid truncated where the Gaussian
// envelope falls below tail tolerance; Monte Carlo importance sampling from
// the envelope Gaussian beyond d = 4 or on request.
ComplexQuadResult bl_integral_numeric(const Datum& datum,
                                      const std::vector<FunctionSpec>& tuple,
                                      const QuadratureOpts& opts = {});

// |bl_integral| / prod_j ||f_j||_{p_j}.
RealQuadResult blbp_ratio(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                          const QuadratureOpts& opts = {});

// Discrete approximation of f^(xi) = int f(x) e^{-2 pi i <x, xi>} dx on a
// centered frequency grid. Throws when aliasing is detected.
GridFunction fourier_numeric(const FunctionSpec& f, const QuadratureOpts& opts = {});

// ---------------------------------------------------------------------------
// Decomposed high-accuracy forms. Values split as closed Gaussian baseline
// plus quadratured local correction, so experiments can resolve corrections
// many orders below the baseline (combine with log1p).
// ---------------------------------------------------------------------------

struct NormPowerDecomp {
  double base = 0.0;        // closed-form Gaussian part of ||f||_p^p
  double correction = 0.0;  // quadratured remainder
  double error = 0.0;
  double total() const { return base + correction; }
  double norm(double p) const;
};

NormPowerDecomp lp_norm_power_decomp(const FunctionSpec& f, double p,
                                     const QuadratureOpts& opts = {});

struct BlFormDecomp {
  Complex base{0.0, 0.0};
  Complex correction{0.0, 0.0};
  double error = 0.0;
  Complex total() const { return base + correction; }
};

BlFormDecomp bl_form_decomposed(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                                const QuadratureOpts& opts = {});

// ---------------------------------------------------------------------------
// Distance to the Gaussian classes (best-found upper bounds).
// ---------------------------------------------------------------------------

enum class GaussianClass { RealPositive, Complex };

struct DistanceOpts {
  int starts = 16;
  int max_iters = 800;
  double tol = 1e-11;
  uint64_t seed = 20260808;
  QuadratureOpts quad;
};

struct DistanceResult {
  double upper_bound = 0.0;
  ComplexGaussianSpec argmin;
  bool converged = false;
};

// Multi-start local minimization of ||f - g||_p over the chosen class
// (moment-matched and perturbed starts). The result is an upper bound for
// the infimum.
DistanceResult dist_to_gaussians(const FunctionSpec& f, double p, GaussianClass cls,
                                 const DistanceOpts& opts = {});

}  // namespace blstab

#include "blstab/fourier.hpp"

#include <cmath>

namespace blstab {

double sharp_hy_constant(double p) {
  if (std::isnan(p) || p < 1.0 || p > 2.0)
    throw std::invalid_argument("sharp_hy_constant: p must lie in [1, 2]");
  if (p == 1.0 || p == 2.0) return 1.0;  // p'^{1/p'} -> 1 as p' -> inf; A_2 = 1
  const double pc = p / (p - 1.0);
  return std::sqrt(std::pow(p, 1.0 / p) / std::pow(pc, 1.0 / pc));
}

double fbl_constant(const Datum& datum, double bl_value) {
  if (!std::isfinite(bl_value) || bl_value <= 0.0)
    throw std::invalid_argument("fbl_constant: BL value must be finite and positive");
  double out = bl_value;
  for (int j = 0; j < datum.size(); ++j) {
    const double p = datum.factors[j].p;
    if (std::isinf(p) || p > 2.0)
      throw std::invalid_argument("fbl_constant: exponents must lie in [1, 2]");
    out *= std::pow(sharp_hy_constant(p), -datum.codim(j));
  }
  return out;
}

namespace {

double conjugate_exponent(double p) {
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  return p / (p - 1.0);
}

// Compactly supported inputs transform with sub-Gaussian tails, so the
// default frequency window can trip the aliasing guard; refine the grid
// (which widens the window at fixed box) until it passes.
GridFunction fourier_with_window_growth(const FunctionSpec& f, QuadratureOpts quad) {
  if (quad.points_per_axis == 0) quad.points_per_axis = 512;
  const int cap = spec_dim(f) == 1 ? 1 << 15 : 1 << 11;
  for (;;) {
    try {
      return fourier_numeric(f, quad);
    } catch (const std::runtime_error&) {
      if (quad.points_per_axis >= cap) throw;
      quad.points_per_axis *= 2;
    }
  }
}

// ||f^||_{p'} and ||f||_p, closed forms where available.
struct HYNorms {
  double norm = 0.0;
  double fourier_norm = 0.0;
  double error = 0.0;
};

HYNorms hy_norms(const FunctionSpec& f, double p, const HYOpts& opts) {
  HYNorms out;
  const double pc = conjugate_exponent(p);
  const ComplexGaussianSpec* closed = std::get_if<ComplexGaussianSpec>(&f);
  ComplexGaussianSpec modulated_closed;
  if (const auto* mg = std::get_if<ModulatedGaussian>(&f)) {
    modulated_closed = to_closed(*mg);
    closed = &modulated_closed;
  }
  if (closed != nullptr && !opts.force_numeric) {
    out.norm = lp_norm(*closed, p);
    out.fourier_norm = lp_norm(fourier(*closed), pc);
    return out;
  }
  const auto norm = lp_norm_numeric(f, p, opts.quad);
  const GridFunction transformed = fourier_with_window_growth(f, opts.quad);
  const auto fnorm = lp_norm_numeric(transformed, pc, opts.quad);
  out.norm = norm.value;
  out.fourier_norm = fnorm.value;
  out.error = norm.error_estimate + fnorm.error_estimate;
  return out;
}

}  // namespace

HYReport hy_ratio(const FunctionSpec& f, double p, const HYOpts& opts) {
  if (std::isnan(p) || p < 1.0 || p > 2.0)
    throw std::invalid_argument("hy_ratio: p must lie in [1, 2]");
  const int d = spec_dim(f);
  HYReport report;
  const HYNorms norms = hy_norms(f, p, opts);
  if (norms.norm <= 0.0) throw std::invalid_argument("hy_ratio: ||f||_p vanishes");
  report.norm = norms.norm;
  report.fourier_norm = norms.fourier_norm;
  report.quad_error = norms.error;
  report.ratio = norms.fourier_norm / (std::pow(sharp_hy_constant(p), d) * norms.norm);

  if (opts.with_distance) {
    if (p <= 1.0 || p >= 2.0)
      throw std::invalid_argument(
          "hy_ratio: the stability fields require p strictly inside (1, 2)");
    const auto dist = dist_to_gaussians(f, p, GaussianClass::Complex, opts.distance);
    report.dist_ratio = dist.upper_bound / norms.norm;
    if (report.dist_ratio > 0.0)
      report.implied_c = (1.0 - report.ratio) / (report.dist_ratio * report.dist_ratio);
  }
  return report;
}

StrengthenedCheck strengthened_bl_check(const Datum& datum,
                                        const std::vector<FunctionSpec>& tuple,
                                        double bl_value, const QuadratureOpts& opts,
                                        double tol) {
  StrengthenedCheck check;
  const auto integral = bl_integral_numeric(datum, tuple, opts);
  check.lhs = std::abs(integral.value);
  check.quad_error = integral.error_estimate;

  double rhs = bl_value;
  for (int j = 0; j < datum.size(); ++j) {
    const double p = datum.factors[j].p;
    if (std::isinf(p) || p > 2.0)
      throw std::invalid_argument("strengthened_bl_check: exponents must lie in [1, 2]");
    const double pc = conjugate_exponent(p);
    rhs *= std::pow(sharp_hy_constant(p), -datum.codim(j));
    if (spec_is_zero(tuple[j])) {
      rhs = 0.0;
      break;
    }
    double fourier_norm;
    if (const auto* g = std::get_if<ComplexGaussianSpec>(&tuple[j])) {
      fourier_norm = lp_norm(fourier(*g), pc);
    } else if (const auto* mg = std::get_if<ModulatedGaussian>(&tuple[j])) {
      fourier_norm = lp_norm(fourier(to_closed(*mg)), pc);
    } else {
      const GridFunction transformed = fourier_with_window_growth(tuple[j], opts);
      const auto fnorm = lp_norm_numeric(transformed, pc, opts);
      fourier_norm = fnorm.value;
      check.quad_error += fnorm.error_estimate;
    }
    rhs *= fourier_norm;
  }
  check.rhs = rhs;
  check.holds = check.lhs <= rhs * (1.0 + tol) + tol * 1e-6;
  return check;
}

}  // namespace blstab

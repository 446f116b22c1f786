#pragma once

#include "blstab/datum.hpp"
#include "blstab/integrator.hpp"

namespace blstab {

// Sharp per-dimension Hausdorff-Young constant (p^{1/p}/p'^{1/p'})^{1/2},
// with the analytic limits at p = 1 and p = 2. Restricted to [1, 2].
double sharp_hy_constant(double p);

// Fourier-side BL constant: bl_value * prod_j sharp_hy_constant(p_j)^{-d_j}.
// Requires every p_j in [1, 2].
double fbl_constant(const Datum& datum, double bl_value);

struct HYReport {
  double ratio = 0.0;       // ||f^||_{p'} / (A_p^d ||f||_p)
  double dist_ratio = 0.0;  // dist_p(f, complex Gaussians) / ||f||_p (upper bound)
  double implied_c = 0.0;   // (1 - ratio) / dist_ratio^2 when dist_ratio > 0
  double norm = 0.0;
  double fourier_norm = 0.0;
  double quad_error = 0.0;
};

struct HYOpts {
  QuadratureOpts quad;
  DistanceOpts distance;
  bool force_numeric = false;  // use the grid transform even for Gaussians
  bool with_distance = true;   // fill the stability fields (needs 1 < p < 2
                               // per the stable inequality; ratio alone works
                               // on [1, 2])
};

HYReport hy_ratio(const FunctionSpec& f, double p, const HYOpts& opts = {});

struct StrengthenedCheck {
  double lhs = 0.0;  // |int prod f_j o B_j|
  double rhs = 0.0;  // bl_value * prod A_{p_j}^{-d_j} ||f_j^||_{p_j'}
  bool holds = false;
  double quad_error = 0.0;
};

StrengthenedCheck strengthened_bl_check(const Datum& datum,
                                        const std::vector<FunctionSpec>& tuple,
                                        double bl_value, const QuadratureOpts& opts = {},
                                        double tol = 1e-6);

}  // namespace blstab

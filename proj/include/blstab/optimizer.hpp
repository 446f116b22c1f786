#pragma once

#include <vector>

#include "blstab/datum.hpp"
#include "blstab/gaussian_bl.hpp"

namespace blstab {

struct OptimizerOpts {
  int restarts = 8;
  int max_iters = 2000;
  int fixed_point_iters = 500;
  double value_tol = 1e-13;
  double grad_tol = 1e-11;
  uint64_t seed = 20260808;
  // Divergence verdict: value blow-up combined with a collapsing eigenvalue
  // ratio of the normalized M over a sustained window.
  double divergence_value_factor = 1e6;
  double divergence_eig_ratio = 1e-8;
  int divergence_window = 50;
  bool collect_trace = true;
};

struct TracePoint {
  int iteration = 0;
  double value = 0.0;
  double eig_ratio = 0.0;  // lambda_min(M) / lambda_max(M)
};

struct OptimizerResult {
  double value = 0.0;
  GaussianTuple maximizer;  // det-normalized
  double el_residual = 0.0;
  bool restarts_agree = true;
  bool divergence_flag = false;
  bool value_monotone = true;  // monitored along the iteration, not assumed
  int iterations = 0;
  std::vector<TracePoint> trace;
};

// First-order stationarity: max_j ||A_j^{-1} - B_j M^{-1} B_j^T|| (operator
// norm); zero at interior critical points of the log value.
double el_residual(const Datum& datum, const GaussianTuple& tuple);

// Iterates A_j <- (B_j M^{-1} B_j^T)^{-1} with det normalization.
OptimizerResult fixed_point_iterate(const Datum& datum, const GaussianTuple& start,
                                    int max_iters, double tol,
                                    const OptimizerOpts& opts = {});

// Log-value ascent over Cholesky factors (positive-diagonal, log-scaled)
// with a value-increase line search; every accepted step is renormalized.
OptimizerResult gradient_ascent(const Datum& datum, const GaussianTuple& start,
                                const OptimizerOpts& opts = {});
OptimizerResult gradient_ascent(const Datum& datum, const OptimizerOpts& opts = {});

// Analytic gradient of log gaussian_bl_value in the packed Cholesky
// parametrization (exposed for the finite-difference cross-check).
Vector log_value_gradient(const Datum& datum, const GaussianTuple& tuple);

// Seeded multi-restart search for the BL constant (fixed-point warm start,
// gradient polish). Ties broken by (value, el_residual, restart index).
OptimizerResult bl_constant(const Datum& datum, const OptimizerOpts& opts = {});

struct GeometricReduction {
  Datum reduced;
  std::vector<Matrix> factor_transforms;  // E_j = A_j^{1/2}
  Matrix base_transform;                  // F = M^{-1/2}
  double frame_residual = 0.0;
  double projection_residual = 0.0;
  double value_at_identity = 0.0;
  double el_residual_identity = 0.0;
};

// B~_j = A_j^{1/2} B_j M^{-1/2}; requires el_residual(datum, maximizer) < 1e-6.
GeometricReduction geometric_reduce(const Datum& datum, const GaussianTuple& maximizer);

struct CompactnessReport {
  double eta = 0.0;
  int samples_total = 0;
  int samples_above = 0;  // value >= eta
  double max_lambda1 = 0.0;
  double min_factor_eigenvalue = 0.0;
  double max_factor_eigenvalue = 0.0;
  double eig_ratio_threshold = 0.0;
  double max_value_degenerate = 0.0;  // max value among low-eig-ratio tuples
  bool degenerate_below_eta = false;
};

CompactnessReport compactness_probe(const Datum& datum, double eta, int samples,
                                    uint64_t seed);

}  // namespace blstab

#pragma once

#include <optional>
#include <vector>

#include "blstab/datum.hpp"
#include "blstab/gaussian_bl.hpp"
#include "blstab/integrator.hpp"
#include "blstab/optimizer.hpp"

namespace blstab {

struct StabilityOpts {
  QuadratureOpts quad;
  // Experiment distances sit in the perturbative regime where the
  // Gaussian-part start is nearly optimal; lighter search settings suffice.
  DistanceOpts distance{
      .starts = 8, .max_iters = 400, .tol = 1e-11, .seed = 20260808,
      .quad = QuadratureOpts{.points_per_axis = 512}};
  double sharpened_c = 1e-3;  // default per-factor constant for holds_sharpened
  uint64_t seed = 20260808;
};

struct DeficitReport {
  double blbp = 0.0;
  double bl_const = 0.0;
  double deficit = 0.0;  // 1 - blbp / bl_const
  std::vector<double> dist_ratios;
  double implied_c = 0.0;  // largest c with prod(1 - c D_j^2) >= blbp/bl_const
  bool holds_sharpened = false;
  double quad_error = 0.0;
  // For nonnegative tuples: |dist_{R+} - dist_C| over the norm, else -1.
  double class_agreement_gap = -1.0;
};

DeficitReport deficit_report(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                             double bl_const, const StabilityOpts& opts = {});

// Least-squares fit of log(values) against log(grid).
struct ExponentFit {
  std::vector<double> grid;
  std::vector<double> values;
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // two standard errors of the slope
};

ExponentFit fit_exponent(const std::vector<double>& grid, const std::vector<double>& values);

// One-parameter bump perturbation of an extremizing Gaussian tuple.
struct PerturbationFamily {
  GaussianTuple base;            // centered extremizer exponents
  std::vector<double> bump_amplitudes;  // per factor, scaled by the parameter
  std::vector<Vector> bump_centers;
  std::vector<double> bump_radii;

  std::vector<FunctionSpec> member(double t) const;
};

PerturbationFamily default_family(const Datum& datum, const GaussianTuple& extremizer,
                                  uint64_t seed);

struct SweepResult {
  ExponentFit fit;  // log max-deficit against log epsilon
  std::vector<double> amplitudes;  // bisected amplitude per epsilon
};

// For each epsilon, bisects the family amplitude until max_j D_j = epsilon
// and records the deficit; fits log(deficit) against log(epsilon).
SweepResult corollary_sweep(const Datum& datum, const PerturbationFamily& family,
                            const std::vector<double>& eps_grid, double bl_const,
                            const StabilityOpts& opts = {});

struct Opt1Result {
  ExponentFit deficit_fit;   // expected slope 2
  ExponentFit distance_fit;  // expected slope 1
  double kappa = 0.0;        // min over the grid of max_j D_j(t) / t
  double u0 = 0.0;           // blbp at t = 0 (the BL constant)
};

Opt1Result opt1_experiment(const Datum& datum, const PerturbationFamily& family,
                           const std::vector<double>& t_grid,
                           const StabilityOpts& opts = {});

struct Opt2Result {
  ExponentFit deficit_fit;    // expected slope p_1
  ExponentFit distance_fit;   // expected slope 1
  std::vector<double> norm_power_errors;  // | ||f_1||_{p1}^{p1} - 1 | per delta
  std::vector<double> translations;       // t(delta)
};

// Geometric datum with p_1 > 2; f_1 = g_1 + delta phi(. - t(delta) v) with
// t(delta) = K log(1/delta)^{3/2}.
Opt2Result opt2_experiment(const Datum& datum, const std::vector<double>& delta_grid,
                           const Vector& direction, double growth_k,
                           const StabilityOpts& opts = {});

struct TupleStabilitySpec {
  int samples = 200;
  double spread = 0.2;       // exponent perturbation scale
  double offset_spread = 0.5;
  uint64_t seed = 20260808;
  std::vector<double> envelope_deltas = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
};

struct TupleStabilityReport {
  double bl_const = 0.0;
  GaussianTuple maximizer;
  bool restarts_agree = false;
  std::vector<double> value_ratios;      // per sample
  std::vector<double> orbit_distances;   // Frobenius distance to {r A_*}
  std::vector<double> offset_distances;  // dist(v, V) for offset samples
  std::vector<double> offset_neglog_c;   // -log c for offset samples
  double quadratic_coeff_lower = 0.0;    // min (-log c) / dist(v, V)^2
  double max_value_drift_in_v = 0.0;     // |ratio - 1| for offsets inside V
  // (delta, eps(delta)): max orbit distance among samples with deficit <= delta.
  std::vector<std::pair<double, double>> modulus_envelope;
  bool far_restarts_converge = false;
};

TupleStabilityReport tuple_stability_experiment(const Datum& datum,
                                                const TupleStabilitySpec& spec,
                                                const OptimizerOpts& opt_opts = {},
                                                const StabilityOpts& opts = {});

enum class HolderProfile { Bump, Gaussian };

struct HolderFamilyReport {
  double blbp = 0.0;               // node-sum ratio; 1 at equality
  std::vector<double> dist_ratios; // best-found projective distances
  double proportionality_residual = 0.0;  // max_k | f_j^{p_j}(x_k) - f_1^{p_1}(x_k) |
  bool equality = false;
};

// f_j = psi^{r/p_j} for a common profile psi, so |f_j|^{p_j} are pairwise
// proportional and the tuple realizes equality in Holder's inequality.
HolderFamilyReport holder_equality_family(const std::vector<double>& exponents,
                                          HolderProfile profile, double power_r = 0.25,
                                          const StabilityOpts& opts = {});

struct ComplexExtremizerResult {
  Datum datum;
  Vector coefficients;          // nullspace vector a, unit norm, sign-fixed
  double phase_residual = 0.0;  // ||sum_j a_j v_j v_j^T||
  Complex ratio{0.0, 0.0};      // modulated blbp
  double bl_const = 0.0;
  GaussianTuple maximizer;
  std::vector<double> dist_upper;  // per factor, NM upper bound / norm
  std::vector<double> dist_lower;  // per factor, certified L^2 lower bound / norm
                                   // (p_j = 2 only; 0 when not applicable)
};

// Quadratic-phase construction: f_j = g_j e^{i a_j y^2} over the Gaussian
// extremizer, with a in the nullspace of the quadratic-form assembly matrix.
ComplexExtremizerResult complex_extremizer_build(int dim, const std::vector<Vector>& directions,
                                                 const OptimizerOpts& opt_opts = {},
                                                 const StabilityOpts& opts = {});

// Certified lower bound for dist_2(f, complex Gaussians)/||f||_2 when
// f(y) = e^{-b y^2 + i a y^2}: sup over real-q Gaussians of the squared
// correlation is 2 sqrt(qb) / |q + b - ia| at the optimal (complex) linear
// term, maximized over q by scanning.
double quadratic_phase_l2_lower_bound(double b, double a);

}  // namespace blstab

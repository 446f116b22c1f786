#include "blstab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "blstab/parallel.hpp"
#include "blstab/rng.hpp"

namespace blstab {

namespace {

constexpr double kPi = std::numbers::pi;

bool spec_in_complex_class(const FunctionSpec& f) {
  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) return g->in_paper_class();
  if (const auto* gb = std::get_if<GaussianPlusBump>(&f))
    return gb->amplitude == 0.0 && gb->gaussian.in_paper_class();
  if (const auto* mg = std::get_if<ModulatedGaussian>(&f))
    return mg->phase.cwiseAbs().maxCoeff() <= 1e-14 && mg->base.in_paper_class();
  return false;
}

bool spec_nonnegative(const FunctionSpec& f) {
  auto positive_gaussian = [](const ComplexGaussianSpec& g) {
    return g.in_paper_class() && std::abs(g.amplitude.imag()) <= 1e-14 &&
           g.amplitude.real() > 0.0 && g.linear.imag().cwiseAbs().maxCoeff() <= 1e-14;
  };
  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) return positive_gaussian(*g);
  if (const auto* gb = std::get_if<GaussianPlusBump>(&f))
    return gb->amplitude >= 0.0 && positive_gaussian(gb->gaussian);
  return false;
}

bool tuple_has_grid(const std::vector<FunctionSpec>& tuple) {
  for (const auto& f : tuple)
    if (std::holds_alternative<GridFunction>(f)) return true;
  return false;
}

}  // namespace

DeficitReport deficit_report(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                             double bl_const, const StabilityOpts& opts) {
  if (bl_const <= 0.0 || !std::isfinite(bl_const))
    throw std::invalid_argument("deficit_report: BL constant must be finite and positive");
  DeficitReport report;
  report.bl_const = bl_const;

  // blbp through the decomposed path when available (closed Gaussian
  // baseline plus local corrections), otherwise through the plain grid.
  if (!tuple_has_grid(tuple)) {
    const BlFormDecomp integral = bl_form_decomposed(datum, tuple, opts.quad);
    double log_norms = 0.0;
    double rel_err = integral.error /
                     std::max(1e-300, std::abs(integral.total()));
    for (int j = 0; j < datum.size(); ++j) {
      const auto norm = lp_norm_power_decomp(tuple[j], datum.factors[j].p, opts.quad);
      if (norm.total() <= 0.0)
        throw std::invalid_argument("deficit_report: a factor norm vanishes");
      log_norms += std::log(norm.total()) / datum.factors[j].p;
      rel_err += norm.error / norm.total();
    }
    report.blbp = std::abs(integral.total()) * std::exp(-log_norms);
    report.quad_error = report.blbp * rel_err;
  } else {
    const auto ratio = blbp_ratio(datum, tuple, opts.quad);
    report.blbp = ratio.value;
    report.quad_error = ratio.error_estimate;
  }
  report.deficit = 1.0 - report.blbp / bl_const;

  // Per-factor projective distances (best-found upper bounds); exact zero
  // for members of the complex Gaussian class.
  bool all_nonneg = true;
  double gap = 0.0;
  for (int j = 0; j < datum.size(); ++j) {
    const double p = datum.factors[j].p;
    const double norm = std::holds_alternative<GridFunction>(tuple[j])
                            ? lp_norm_numeric(tuple[j], p, opts.quad).value
                            : lp_norm_power_decomp(tuple[j], p, opts.quad).norm(p);
    if (spec_in_complex_class(tuple[j])) {
      report.dist_ratios.push_back(0.0);
      all_nonneg = all_nonneg && spec_nonnegative(tuple[j]);
      continue;
    }
    DistanceOpts dopts = opts.distance;
    dopts.seed = opts.distance.seed + 7919 * static_cast<uint64_t>(j + 1);
    const auto dist = dist_to_gaussians(tuple[j], p, GaussianClass::Complex, dopts);
    report.dist_ratios.push_back(dist.upper_bound / norm);
    if (spec_nonnegative(tuple[j])) {
      const auto dist_r =
          dist_to_gaussians(tuple[j], p, GaussianClass::RealPositive, dopts);
      gap = std::max(gap, std::abs(dist_r.upper_bound - dist.upper_bound) / norm);
    } else {
      all_nonneg = false;
    }
  }
  if (all_nonneg) report.class_agreement_gap = gap;

  // Largest c consistent with prod (1 - c D_j^2) >= blbp / bl_const.
  const double target = report.blbp / bl_const;
  double best_c = 0.0;
  for (int k = 0; k <= 600; ++k) {
    const double c = std::pow(10.0, -6.0 + 12.0 * k / 600.0);
    double prod = 1.0;
    bool admissible = true;
    for (double dr : report.dist_ratios) {
      const double factor = 1.0 - c * dr * dr;
      if (factor <= 0.0) admissible = false;
      prod *= factor;
    }
    if (admissible && prod >= target) best_c = c;
  }
  report.implied_c = best_c;

  double floor_prod = 1.0;
  for (double dr : report.dist_ratios) floor_prod *= 1.0 - opts.sharpened_c * dr * dr;
  report.holds_sharpened =
      report.blbp <= bl_const * floor_prod * (1.0 + 1e-6) + report.quad_error;
  return report;
}

ExponentFit fit_exponent(const std::vector<double>& grid, const std::vector<double>& values) {
  if (grid.size() != values.size() || grid.size() < 6)
    throw std::invalid_argument("fit_exponent: need at least 6 aligned points");
  for (size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw std::invalid_argument("fit_exponent: grid must be strictly increasing");
  ExponentFit fit;
  fit.grid = grid;
  fit.values = values;
  const size_t n = grid.size();
  double sx = 0, sy = 0;
  for (size_t i = 0; i < n; ++i) {
    if (values[i] <= 0.0)
      throw std::invalid_argument("fit_exponent: values must be positive for a log fit");
    sx += std::log(grid[i]);
    sy += std::log(values[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = std::log(grid[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(values[i]) - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0;
  for (size_t i = 0; i < n; ++i) {
    const double resid =
        std::log(values[i]) - (fit.intercept + fit.slope * std::log(grid[i]));
    ssr += resid * resid;
  }
  const double sigma2 = n > 2 ? ssr / (n - 2) : 0.0;
  fit.half_width = 2.0 * std::sqrt(sigma2 / sxx);
  return fit;
}

std::vector<FunctionSpec> PerturbationFamily::member(double t) const {
  std::vector<FunctionSpec> tuple;
  for (size_t j = 0; j < base.exponents.size(); ++j) {
    GaussianPlusBump f;
    f.gaussian = centered_spec(base.exponents[j]);
    f.amplitude = t * bump_amplitudes[j];
    f.center = bump_centers[j];
    f.radius = bump_radii[j];
    tuple.push_back(f);
  }
  return tuple;
}

PerturbationFamily default_family(const Datum& datum, const GaussianTuple& extremizer,
                                  uint64_t seed) {
  PerturbationFamily family;
  family.base = extremizer;
  Rng rng(seed);
  for (int j = 0; j < datum.size(); ++j) {
    family.bump_amplitudes.push_back(0.8 + 0.4 * rng.uniform());
    Vector center(datum.codim(j));
    for (int i = 0; i < datum.codim(j); ++i) center(i) = 0.3 + 0.4 * rng.uniform();
    family.bump_centers.push_back(center);
    family.bump_radii.push_back(0.7 + 0.3 * rng.uniform());
  }
  return family;
}

namespace {

// Deficit of a family member through the decomposed path: identical closed
// baselines cancel, so tiny deficits survive in log1p form.
double family_deficit(const Datum& datum, const PerturbationFamily& family, double t,
                      const StabilityOpts& opts) {
  const auto tuple = family.member(t);
  const BlFormDecomp integral = bl_form_decomposed(datum, tuple, opts.quad);
  if (integral.base == Complex(0.0, 0.0))
    throw std::invalid_argument("family_deficit: Gaussian baseline vanished");
  // correction is complex but the family is real; take the real part.
  const double rel_num = (integral.correction / integral.base).real();
  double log_ratio = std::log1p(rel_num);
  for (int j = 0; j < datum.size(); ++j) {
    const auto norm = lp_norm_power_decomp(tuple[j], datum.factors[j].p, opts.quad);
    log_ratio -= std::log1p(norm.correction / norm.base) / datum.factors[j].p;
  }
  return -std::expm1(log_ratio);
}

double family_max_distance(const Datum& datum, const PerturbationFamily& family, double t,
                           const StabilityOpts& opts) {
  const auto tuple = family.member(t);
  double worst = 0.0;
  for (int j = 0; j < datum.size(); ++j) {
    if (family.bump_amplitudes[j] == 0.0 || t == 0.0) continue;
    DistanceOpts dopts = opts.distance;
    dopts.seed = opts.distance.seed + 31 * static_cast<uint64_t>(j + 1);
    const auto dist =
        dist_to_gaussians(tuple[j], datum.factors[j].p, GaussianClass::Complex, dopts);
    const double norm =
        lp_norm_power_decomp(tuple[j], datum.factors[j].p, opts.quad)
            .norm(datum.factors[j].p);
    worst = std::max(worst, dist.upper_bound / norm);
  }
  return worst;
}

}  // namespace

SweepResult corollary_sweep(const Datum& datum, const PerturbationFamily& family,
                            const std::vector<double>& eps_grid, double bl_const,
                            const StabilityOpts& opts) {
  if (eps_grid.size() < 6)
    throw std::invalid_argument("corollary_sweep: need at least 6 epsilon values");
  if (bl_const <= 0.0)
    throw std::invalid_argument("corollary_sweep: BL constant must be positive");
  SweepResult result;
  result.amplitudes.resize(eps_grid.size());
  std::vector<double> deficits(eps_grid.size());
  std::vector<bool> unreachable(eps_grid.size(), false);

  parallel_for(static_cast<int>(eps_grid.size()), [&](int i) {
    const double eps = eps_grid[i];
    // Bracket the amplitude with max_j D_j(t) = eps, then bisect. Deficits
    // are measured against the family's own extremal value u(0), which the
    // decomposed form cancels exactly.
    double lo = 0.0, hi = 0.05;
    double d_hi = family_max_distance(datum, family, hi, opts);
    int guard = 0;
    while (d_hi < eps && guard++ < 40) {
      hi *= 2.0;
      d_hi = family_max_distance(datum, family, hi, opts);
    }
    if (d_hi < eps) {
      unreachable[i] = true;
      return;
    }
    for (int step = 0; step < 40; ++step) {
      const double mid = 0.5 * (lo + hi);
      const double d_mid = family_max_distance(datum, family, mid, opts);
      (d_mid < eps ? lo : hi) = mid;
      if ((hi - lo) < 1e-4 * hi) break;
    }
    const double t_star = 0.5 * (lo + hi);
    result.amplitudes[i] = t_star;
    deficits[i] = std::max(family_deficit(datum, family, t_star, opts), 1e-300);
  });

  for (bool fail : unreachable)
    if (fail)
      throw std::invalid_argument("corollary_sweep: family cannot reach the target distance");
  result.fit = fit_exponent(eps_grid, deficits);
  return result;
}

Opt1Result opt1_experiment(const Datum& datum, const PerturbationFamily& family,
                           const std::vector<double>& t_grid, const StabilityOpts& opts) {
  Opt1Result result;
  std::vector<double> deficits, distances, used_grid;
  for (double t : t_grid) {
    if (t == 0.0) continue;  // the grid excludes the extremal point itself
    used_grid.push_back(t);
  }
  deficits.resize(used_grid.size());
  distances.resize(used_grid.size());

  {
    const auto base_tuple = family.member(0.0);
    const BlFormDecomp base = bl_form_decomposed(datum, base_tuple, opts.quad);
    double log_norms = 0.0;
    for (int j = 0; j < datum.size(); ++j)
      log_norms += std::log(lp_norm_power_decomp(base_tuple[j], datum.factors[j].p,
                                                 opts.quad)
                                .total()) /
                   datum.factors[j].p;
    result.u0 = std::abs(base.total()) * std::exp(-log_norms);
  }

  parallel_for(static_cast<int>(used_grid.size()), [&](int i) {
    const double t = used_grid[i];
    deficits[i] = std::max(family_deficit(datum, family, t, opts), 1e-300);
    distances[i] = family_max_distance(datum, family, t, opts);
  });

  result.deficit_fit = fit_exponent(used_grid, deficits);
  result.distance_fit = fit_exponent(used_grid, distances);
  result.kappa = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < used_grid.size(); ++i)
    result.kappa = std::min(result.kappa, distances[i] / used_grid[i]);
  return result;
}

Opt2Result opt2_experiment(const Datum& datum, const std::vector<double>& delta_grid,
                           const Vector& direction, double growth_k,
                           const StabilityOpts& opts) {
  const auto geo = is_geometric(datum, 1e-8);
  if (!geo.geometric)
    throw std::invalid_argument("opt2_experiment: datum must be geometric");
  if (datum.factors[0].p <= 2.0)
    throw std::invalid_argument("opt2_experiment: requires p_1 > 2");
  if (direction.size() != datum.codim(0) || direction.norm() == 0.0)
    throw std::invalid_argument("opt2_experiment: invalid translation direction");

  for (double delta : delta_grid)
    if (delta <= 0.0 || delta >= 1.0)
      throw std::invalid_argument("opt2_experiment: deltas must lie in (0, 1)");

  Opt2Result result;
  std::vector<double> deficits(delta_grid.size()), distances(delta_grid.size());
  result.norm_power_errors.resize(delta_grid.size());
  result.translations.resize(delta_grid.size());

  // g_j = e^{-pi |x|^2 / p_j} has unit L^{p_j} norm.
  std::vector<ComplexGaussianSpec> gaussians;
  for (int j = 0; j < datum.size(); ++j)
    gaussians.push_back(centered_spec(
        Matrix::Identity(datum.codim(j), datum.codim(j)) * (kPi / datum.factors[j].p)));

  const Vector unit = direction / direction.norm();
  const double p1 = datum.factors[0].p;

  parallel_for(static_cast<int>(delta_grid.size()), [&](int i) {
    const double delta = delta_grid[i];
    const double translation = growth_k * std::pow(std::log(1.0 / delta), 1.5);
    result.translations[i] = translation;

    GaussianPlusBump f1;
    f1.gaussian = gaussians[0];
    f1.amplitude = delta;
    f1.center = translation * unit;
    f1.radius = 1.0;
    std::vector<FunctionSpec> tuple;
    tuple.push_back(f1);
    for (int j = 1; j < datum.size(); ++j) tuple.push_back(gaussians[j]);

    const BlFormDecomp integral = bl_form_decomposed(datum, tuple, opts.quad);
    const double rel_num = (integral.correction / integral.base).real();
    double log_ratio = std::log1p(rel_num);
    for (int j = 0; j < datum.size(); ++j) {
      const auto norm = lp_norm_power_decomp(tuple[j], datum.factors[j].p, opts.quad);
      log_ratio -= std::log1p(norm.correction / norm.base) / datum.factors[j].p;
      if (j == 0) result.norm_power_errors[i] = std::abs(norm.total() - 1.0);
    }
    deficits[i] = std::max(-std::expm1(log_ratio), 1e-300);

    DistanceOpts dopts = opts.distance;
    dopts.seed = opts.distance.seed + 101 * static_cast<uint64_t>(i + 1);
    const auto dist = dist_to_gaussians(tuple[0], p1, GaussianClass::RealPositive, dopts);
    const double norm1 = lp_norm_power_decomp(tuple[0], p1, opts.quad).norm(p1);
    distances[i] = dist.upper_bound / norm1;
  });

  // fit_exponent needs an increasing grid.
  std::vector<size_t> order(delta_grid.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return delta_grid[a] < delta_grid[b]; });
  std::vector<double> grid_sorted, deficit_sorted, dist_sorted;
  for (size_t idx : order) {
    grid_sorted.push_back(delta_grid[idx]);
    deficit_sorted.push_back(deficits[idx]);
    dist_sorted.push_back(distances[idx]);
  }
  result.deficit_fit = fit_exponent(grid_sorted, deficit_sorted);
  result.distance_fit = fit_exponent(grid_sorted, dist_sorted);
  return result;
}

TupleStabilityReport tuple_stability_experiment(const Datum& datum,
                                                const TupleStabilitySpec& spec,
                                                const OptimizerOpts& opt_opts,
                                                const StabilityOpts& opts) {
  (void)opts;
  const auto simplicity = classify_simplicity(datum);
  if (simplicity.tag == SimplicityTag::NotSimpleWithWitness)
    throw std::invalid_argument("tuple_stability_experiment: datum is not simple");

  TupleStabilityReport report;
  const OptimizerResult opt = bl_constant(datum, opt_opts);
  if (opt.divergence_flag)
    throw std::invalid_argument("tuple_stability_experiment: optimizer diverged");
  report.bl_const = opt.value;
  report.maximizer = opt.maximizer;
  report.restarts_agree = opt.restarts_agree;

  const Matrix v_basis = consistent_offset_subspace(datum);  // rows span V
  int offset_dim = 0;
  for (int j = 0; j < datum.size(); ++j) offset_dim += datum.codim(j);

  Rng rng(spec.seed);
  double quad_lower = std::numeric_limits<double>::infinity();
  for (int s = 0; s < spec.samples; ++s) {
    // Symmetric perturbation of the maximizer exponents, then renormalize.
    GaussianTuple sample = report.maximizer;
    const double scale = spec.spread * rng.uniform();
    for (auto& a : sample.exponents) {
      Matrix noise(a.rows(), a.cols());
      for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c <= r; ++c) {
          noise(r, c) = scale * rng.normal();
          noise(c, r) = noise(r, c);
        }
      a += noise;
      // Keep positive definite: push back inside the cone if needed.
      const double lo = min_eigenvalue(a);
      if (lo <= 1e-8) a += (1e-8 - lo + 0.1 * scale) * Matrix::Identity(a.rows(), a.cols());
    }
    sample = normalize_det(datum, sample);
    const double ratio = gaussian_bl_value(datum, sample).value / report.bl_const;
    report.value_ratios.push_back(ratio);

    // Distance to the scaling orbit of the maximizer.
    double inner = 0.0, self = 0.0;
    for (size_t j = 0; j < sample.exponents.size(); ++j) {
      inner += (sample.exponents[j].cwiseProduct(report.maximizer.exponents[j])).sum();
      self += sample.exponents[j].squaredNorm();
    }
    const double r_star = self > 0.0 ? inner / self : 1.0;
    double dist_sq = 0.0;
    for (size_t j = 0; j < sample.exponents.size(); ++j)
      dist_sq += (r_star * sample.exponents[j] - report.maximizer.exponents[j]).squaredNorm();
    report.orbit_distances.push_back(std::sqrt(dist_sq));

    // Offset sample on the same exponents.
    if (spec.offset_spread > 0.0) {
      Vector stacked(offset_dim);
      for (int i = 0; i < offset_dim; ++i) stacked(i) = spec.offset_spread * rng.normal();
      const Vector projected = v_basis.transpose() * (v_basis * stacked);
      const double v_dist = (stacked - projected).norm();
      GaussianTuple with_offsets = sample;
      int at = 0;
      for (int j = 0; j < datum.size(); ++j) {
        with_offsets.offsets.push_back(stacked.segment(at, datum.codim(j)));
        at += datum.codim(j);
      }
      const auto sq = complete_square(datum, with_offsets);
      report.offset_distances.push_back(v_dist);
      report.offset_neglog_c.push_back(-std::log(sq.factor));
      if (v_dist > 1e-6)
        quad_lower = std::min(quad_lower, -std::log(sq.factor) / (v_dist * v_dist));
    }
  }
  report.quadratic_coeff_lower = quad_lower;

  // Offsets inside V leave the value unchanged.
  for (int s = 0; s < 10; ++s) {
    Vector x0(datum.dim);
    for (int i = 0; i < datum.dim; ++i) x0(i) = rng.normal();
    GaussianTuple in_v = report.maximizer;
    for (int j = 0; j < datum.size(); ++j)
      in_v.offsets.push_back(datum.factors[j].map * x0);
    const double ratio =
        offset_gaussian_ratio(datum, in_v) / gaussian_bl_value(datum, report.maximizer).value;
    report.max_value_drift_in_v = std::max(report.max_value_drift_in_v, std::abs(ratio - 1.0));
  }

  // Empirical stability modulus: eps(delta) as a monotone envelope.
  for (double delta : spec.envelope_deltas) {
    double eps = 0.0;
    for (size_t i = 0; i < report.value_ratios.size(); ++i)
      if (1.0 - report.value_ratios[i] <= delta)
        eps = std::max(eps, report.orbit_distances[i]);
    report.modulus_envelope.push_back({delta, eps});
  }

  // Restarts from far tuples converge back to the maximizer.
  report.far_restarts_converge = true;
  for (int s = 0; s < 3; ++s) {
    GaussianTuple far;
    for (int j = 0; j < datum.size(); ++j) {
      Matrix l = Matrix::Zero(datum.codim(j), datum.codim(j));
      for (int r = 0; r < datum.codim(j); ++r) {
        for (int c = 0; c < r; ++c) l(r, c) = rng.normal();
        l(r, r) = std::exp(1.5 * rng.normal());
      }
      far.exponents.push_back(l * l.transpose());
    }
    const auto back = gradient_ascent(datum, far, opt_opts);
    const auto polished =
        fixed_point_iterate(datum, back.maximizer, 2000, 1e-14, opt_opts);
    double dist_sq = 0.0;
    for (size_t j = 0; j < polished.maximizer.exponents.size(); ++j)
      dist_sq +=
          (polished.maximizer.exponents[j] - report.maximizer.exponents[j]).squaredNorm();
    if (std::sqrt(dist_sq) > 1e-5) report.far_restarts_converge = false;
  }
  return report;
}

HolderFamilyReport holder_equality_family(const std::vector<double>& exponents,
                                          HolderProfile profile, double power_r,
                                          const StabilityOpts& opts) {
  const int m = static_cast<int>(exponents.size());
  if (m < 2) throw std::invalid_argument("holder_equality_family: need at least 2 factors");
  double q_sum = 0.0;
  for (double p : exponents) {
    if (p <= 1.0) throw std::invalid_argument("holder_equality_family: exponents must exceed 1");
    q_sum += 1.0 / p;
  }
  if (std::abs(q_sum - 1.0) > 1e-12)
    throw std::invalid_argument("holder_equality_family: exponents must satisfy sum 1/p_j = 1");
  if (power_r <= 0.0) throw std::invalid_argument("holder_equality_family: r must be positive");

  HolderFamilyReport report;

  if (profile == HolderProfile::Gaussian) {
    // psi = e^{-pi x^2}: every factor is a Gaussian; equality in closed form.
    std::vector<FunctionSpec> tuple;
    double log_num = 0.0, log_den = 0.0;
    for (double p : exponents) {
      const Matrix a = Matrix::Identity(1, 1) * (kPi * power_r / p);
      tuple.push_back(centered_spec(a));
      log_den += std::log(lp_norm(centered_spec(a), p));
    }
    log_num = std::log(
        gaussian_integral(Matrix::Identity(1, 1).cast<Complex>() * (kPi * power_r),
                          CVector::Zero(1))
            .real());
    report.blbp = std::exp(log_num - log_den);
    for (int j = 0; j < m; ++j) report.dist_ratios.push_back(0.0);
    report.proportionality_residual = 0.0;
    report.equality = std::abs(report.blbp - 1.0) <= 1e-10;
    return report;
  }

  // psi = the standard bump; f_j = psi^{r/p_j} sampled on a common grid.
  const int n = 4097;
  const double lo = -1.1, hi = 1.1;
  const double spacing = (hi - lo) / (n - 1);
  std::vector<GridFunction> grids(m);
  for (int j = 0; j < m; ++j) {
    grids[j].lo = Vector::Constant(1, lo);
    grids[j].spacing = spacing;
    grids[j].shape = {n};
    grids[j].samples.resize(n);
  }
  for (int k = 0; k < n; ++k) {
    const double x = lo + k * spacing;
    const double psi = bump_profile(x);
    for (int j = 0; j < m; ++j)
      grids[j].samples[k] = Complex(std::pow(psi, power_r / exponents[j]), 0.0);
  }

  // Node sums on the shared grid: the discrete Holder equality is exact.
  KahanSum numerator;
  for (int k = 0; k < n; ++k) {
    double prod = 1.0;
    for (int j = 0; j < m; ++j) prod *= grids[j].samples[k].real();
    numerator.add(prod);
  }
  double log_blbp = std::log(numerator.value() * spacing);
  double residual = 0.0;
  for (int j = 0; j < m; ++j) {
    KahanSum mass;
    for (int k = 0; k < n; ++k) {
      mass.add(std::pow(grids[j].samples[k].real(), exponents[j]));
      residual = std::max(residual,
                          std::abs(std::pow(grids[j].samples[k].real(), exponents[j]) -
                                   std::pow(grids[0].samples[k].real(), exponents[0])));
    }
    log_blbp -= std::log(mass.value() * spacing) / exponents[j];
  }
  report.blbp = std::exp(log_blbp);
  report.proportionality_residual = residual;
  report.equality = std::abs(report.blbp - 1.0) <= 1e-8 && residual <= 1e-12;

  for (int j = 0; j < m; ++j) {
    DistanceOpts dopts = opts.distance;
    dopts.seed = opts.distance.seed + 13 * static_cast<uint64_t>(j + 1);
    const FunctionSpec f = grids[j];
    const double norm = lp_norm_numeric(f, exponents[j], opts.quad).value;
    const auto dist =
        dist_to_gaussians(f, exponents[j], GaussianClass::RealPositive, dopts);
    report.dist_ratios.push_back(dist.upper_bound / norm);
  }
  return report;
}

double quadratic_phase_l2_lower_bound(double b, double a) {
  if (b <= 0.0) throw std::invalid_argument("quadratic_phase_l2_lower_bound: b must be positive");
  const double tilt = std::abs(a) / b;  // scale invariance reduces to b = 1
  // corr^2(q) = 2 sqrt(q) / sqrt((1+q)^2 + tilt^2); the optimal complex
  // linear term is zero (the exponent is a negative semidefinite quadratic
  // in (Re v, Im v)), so a scan over q alone is exact.
  double best = 0.0;
  double lo = 1e-6, hi = 1e6;
  for (int round = 0; round < 60; ++round) {
    double best_q = lo;
    const int steps = 200;
    for (int i = 0; i <= steps; ++i) {
      const double q = lo * std::pow(hi / lo, static_cast<double>(i) / steps);
      const double corr2 = 2.0 * std::sqrt(q) / std::sqrt((1.0 + q) * (1.0 + q) + tilt * tilt);
      if (corr2 > best) {
        best = corr2;
        best_q = q;
      }
    }
    const double width = std::pow(hi / lo, 1.0 / steps);
    lo = best_q / width;
    hi = best_q * width;
    if (width < 1.0 + 1e-14) break;
  }
  return std::sqrt(std::max(0.0, 1.0 - best));
}

ComplexExtremizerResult complex_extremizer_build(int dim,
                                                 const std::vector<Vector>& directions,
                                                 const OptimizerOpts& opt_opts,
                                                 const StabilityOpts& opts) {
  const int m = static_cast<int>(directions.size());
  const int quad_dim = dim * (dim + 1) / 2;

  ComplexExtremizerResult result;
  std::vector<Factor> factors;
  for (const auto& v : directions) {
    if (v.size() != dim)
      throw std::invalid_argument("complex_extremizer_build: direction dimension mismatch");
    Matrix b(1, dim);
    b.row(0) = v.transpose();
    factors.push_back(Factor{b, static_cast<double>(m) / dim});
  }
  result.datum = make_datum(dim, std::move(factors));

  const auto simplicity = classify_simplicity(result.datum);
  if (simplicity.tag == SimplicityTag::NotSimpleWithWitness)
    throw std::invalid_argument("complex_extremizer_build: datum is not simple");

  // Rows express <x, v_j>^2 in the basis {x_i^2} then {sqrt(2) x_i x_k, i<k}.
  Matrix assembly(m, quad_dim);
  for (int j = 0; j < m; ++j) {
    int at = 0;
    for (int i = 0; i < dim; ++i) assembly(j, at++) = directions[j](i) * directions[j](i);
    for (int i = 0; i < dim; ++i)
      for (int k = i + 1; k < dim; ++k)
        assembly(j, at++) = std::sqrt(2.0) * directions[j](i) * directions[j](k);
  }
  // Nullspace vector of the map a -> sum_j a_j <x, v_j>^2: guaranteed for
  // m > d(d+1)/2, otherwise only for degenerate configurations.
  Eigen::JacobiSVD<Matrix> svd(assembly.transpose(), Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++rank;
  if (rank >= m) {
    (void)quad_dim;
    throw std::invalid_argument(
        "complex_extremizer_build: trivial nullspace; no phase extremizer from this "
        "construction");
  }
  Vector a = svd.matrixV().col(m - 1);
  a /= a.norm();
  for (int j = 0; j < m; ++j) {
    if (std::abs(a(j)) > 1e-12) {
      if (a(j) < 0.0) a = -a;
      break;
    }
  }
  result.coefficients = a;

  Matrix phase_sum = Matrix::Zero(dim, dim);
  for (int j = 0; j < m; ++j)
    phase_sum += a(j) * directions[j] * directions[j].transpose();
  result.phase_residual = phase_sum.cwiseAbs().maxCoeff();

  const OptimizerResult opt = bl_constant(result.datum, opt_opts);
  if (opt.divergence_flag)
    throw std::invalid_argument("complex_extremizer_build: optimizer diverged");
  result.bl_const = opt.value;
  result.maximizer = opt.maximizer;

  std::vector<Matrix> phases;
  for (int j = 0; j < m; ++j) phases.push_back(Matrix::Constant(1, 1, a(j)));
  result.ratio = modulated_blbp(result.datum, result.maximizer, phases);

  const double p = static_cast<double>(m) / dim;
  for (int j = 0; j < m; ++j) {
    ModulatedGaussian f;
    f.base = centered_spec(result.maximizer.exponents[j]);
    f.phase = phases[j];
    const double norm = lp_norm(to_closed(f), p);
    DistanceOpts dopts = opts.distance;
    dopts.seed = opts.distance.seed + 17 * static_cast<uint64_t>(j + 1);
    const auto dist = dist_to_gaussians(FunctionSpec(f), p, GaussianClass::Complex, dopts);
    result.dist_upper.push_back(dist.upper_bound / norm);
    if (std::abs(p - 2.0) < 1e-12 && std::abs(a(j)) > 1e-12) {
      result.dist_lower.push_back(
          quadratic_phase_l2_lower_bound(result.maximizer.exponents[j](0, 0), a(j)));
    } else {
      result.dist_lower.push_back(0.0);
    }
  }
  return result;
}

}  // namespace blstab

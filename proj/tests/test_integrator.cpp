#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blstab/gaussian_bl.hpp"
#include "blstab/integrator.hpp"
#include "blstab/rng.hpp"
#include "oracles.hpp"
#include "test_data.hpp"

using namespace blstab;
using std::numbers::pi;

namespace {

FunctionSpec standard_gaussian(int n, double scale = pi) {
  return centered_spec(Matrix::Identity(n, n) * scale);
}

GaussianPlusBump bumped(double delta, double center, double radius = 1.0) {
  GaussianPlusBump g;
  g.gaussian = centered_spec(Matrix::Identity(1, 1) * pi);
  g.amplitude = delta;
  g.center = Vector::Constant(1, center);
  g.radius = radius;
  return g;
}

}  // namespace

TEST_CASE("lp_norm_numeric closed and grid paths") {
  CHECK(lp_norm_numeric(standard_gaussian(1), 1.0).value == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(lp_norm_numeric(standard_gaussian(1), 2.0).value ==
        doctest::Approx(std::pow(2.0, -0.25)).epsilon(1e-8));

  // Sum of two Gaussians goes through the grid; compare with the oracle.
  SumOfGaussians sum;
  sum.terms.push_back(centered_spec(Matrix::Identity(1, 1) * 2.0));
  RealGaussian shifted{0.5, Matrix::Identity(1, 1) * 1.3, Vector::Constant(1, 2.0)};
  sum.terms.push_back(gaussian_spec(shifted));
  const FunctionSpec fsum = sum;
  const double p = 1.7;
  const Complex direct = oracle::tensor_midpoint(
      [&](const Vector& x) {
        return Complex(std::pow(std::abs(eval_spec(fsum, x)), p), 0.0);
      },
      Vector::Constant(1, -12.0), Vector::Constant(1, 12.0), 30000);
  const auto numeric = lp_norm_numeric(fsum, p);
  CHECK(numeric.value == doctest::Approx(std::pow(direct.real(), 1.0 / p)).epsilon(1e-7));
  CHECK_FALSE(numeric.flagged);
}

TEST_CASE("gaussian plus far bump norm splits additively") {
  // Disjoint supports: ||g + d phi||_p^p = ||g||_p^p + d^p ||phi||_p^p.
  const double delta = 0.3, p = 1.5;
  const GaussianPlusBump f = bumped(delta, 40.0);
  const auto full = lp_norm_power_decomp(f, p);
  const Complex bump_mass = oracle::adaptive_simpson(
      [&](double x) { return Complex(std::pow(bump_profile(x), p), 0.0); }, -1.0, 1.0, 1e-14);
  const double expected =
      std::pow(lp_norm(f.gaussian, p), p) + std::pow(delta, p) * bump_mass.real();
  CHECK(full.total() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("grid refinement stays within the reported error estimate") {
  for (const FunctionSpec& f :
       {FunctionSpec(bumped(0.4, 1.0)), FunctionSpec(standard_gaussian(2, 1.0))}) {
    for (double p : {1.0, 2.0, 2.7}) {
      QuadratureOpts coarse;
      coarse.points_per_axis = spec_dim(f) == 1 ? 400 : 96;
      QuadratureOpts fine;
      fine.points_per_axis = coarse.points_per_axis * 2;
      const auto a = lp_norm_numeric(f, p, coarse);
      const auto b = lp_norm_numeric(f, p, fine);
      CHECK(std::abs(a.value - b.value) <= std::max(a.error_estimate, 1e-12));
    }
  }
}

TEST_CASE("bl_integral_numeric against closed forms") {
  // Geometric datum with extremizing Gaussians: matches the closed form.
  const Datum frame = testdata::frame120();
  std::vector<FunctionSpec> tuple;
  for (int j = 0; j < frame.size(); ++j)
    tuple.push_back(centered_spec(Matrix::Identity(1, 1) / frame.factors[j].p));
  const auto result = bl_integral_numeric(frame, tuple);
  // integrand = e^{-sum q_j |B_j x|^2 ... } with A_j = I after p-weighting:
  // int e^{-|x|^2} = pi.
  CHECK(result.value.real() == doctest::Approx(pi).epsilon(1e-7));
  CHECK(std::abs(result.value.imag()) < 1e-12);

  // One factor identically zero kills the integral.
  std::vector<FunctionSpec> with_zero = tuple;
  with_zero[1] = SumOfGaussians{};
  CHECK(std::abs(bl_integral_numeric(frame, with_zero).value) == 0.0);
}

TEST_CASE("bl_integral_numeric separates for Loomis-Whitney") {
  // Two bumps on the axes: the integral is the product of 1-d integrals.
  const Datum lw = testdata::loomis_whitney();
  std::vector<FunctionSpec> tuple = {bumped(0.8, 0.3), bumped(0.5, -0.2)};
  const auto result = bl_integral_numeric(lw, tuple);
  double product = 1.0;
  for (const auto& f : tuple) {
    const Complex one_d = oracle::adaptive_simpson(
        [&](double x) {
          Vector v(1);
          v << x;
          return eval_spec(f, v);
        },
        -8.0, 8.0, 1e-12);
    product *= one_d.real();
  }
  CHECK(result.value.real() == doctest::Approx(product).epsilon(1e-6));
}

TEST_CASE("bl_integral_numeric matches gaussian closed forms on random tuples") {
  Rng rng(101);
  const Datum young = testdata::young_trilinear();
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianTuple t = testdata::random_centered_tuple(young, rng, 0.8);
    std::vector<FunctionSpec> tuple;
    for (const auto& a : t.exponents) tuple.push_back(centered_spec(a));
    const auto numeric = bl_integral_numeric(young, tuple);
    const PullbackExponent pe = pullback_exponent(
        {centered_spec(t.exponents[0]), centered_spec(t.exponents[1]),
         centered_spec(t.exponents[2])},
        young, {1.0, 1.0, 1.0});
    const Complex closed = gaussian_integral(pe.exponent, pe.linear);
    CHECK(std::abs(numeric.value - closed) < 1e-5 * std::abs(closed));
  }
}

TEST_CASE("bl_form_decomposed equals numeric integral on bump tuples") {
  const Datum young = testdata::young_trilinear();
  std::vector<FunctionSpec> tuple = {bumped(0.2, 0.5), standard_gaussian(1, 0.7),
                                     bumped(0.1, -0.4)};
  const auto numeric = bl_integral_numeric(young, tuple);
  const auto decomp = bl_form_decomposed(young, tuple);
  CHECK(std::abs(numeric.value - decomp.total()) <
        2e-5 * std::max(1.0, std::abs(decomp.total())));
}

TEST_CASE("blbp_ratio on extremizers and the Lieb bound") {
  const Datum frame = testdata::frame120();
  std::vector<FunctionSpec> extremal;
  for (int j = 0; j < frame.size(); ++j)
    extremal.push_back(centered_spec(Matrix::Identity(1, 1) / frame.factors[j].p));
  CHECK(blbp_ratio(frame, extremal).value == doctest::Approx(1.0).epsilon(1e-5));

  const Datum holder = testdata::holder_pair(2.0, 2.0);
  std::vector<FunctionSpec> same = {standard_gaussian(1), standard_gaussian(1)};
  CHECK(blbp_ratio(holder, same).value == doctest::Approx(1.0).epsilon(1e-6));

  // Lieb bound: any tuple stays below BL = 1 on geometric data.
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<FunctionSpec> tuple;
    for (int j = 0; j < frame.size(); ++j)
      tuple.push_back(bumped(0.3 * rng.uniform(), rng.normal()));
    CHECK(blbp_ratio(frame, tuple).value <= 1.0 + 1e-4);
  }
}

TEST_CASE("monte carlo integration converges at the 1/sqrt(N) rate") {
  // A bump-perturbed factor keeps the importance weights non-constant. (For
  // purely Gaussian tuples the proposal is exact and the variance vanishes.)
  const Datum young = testdata::young_trilinear();
  std::vector<FunctionSpec> tuple = {bumped(0.5, 0.3), standard_gaussian(1, 1.3),
                                     standard_gaussian(1, 0.8)};
  const double exact = bl_integral_numeric(young, tuple).value.real();

  double rms_small = 0.0, rms_mid = 0.0, rms_large = 0.0;
  QuadratureOpts opts;
  opts.method = QuadMethod::MonteCarlo;
  for (long n : {10000L, 40000L, 160000L}) {
    opts.mc_samples = n;
    double sum_sq = 0.0;
    for (uint64_t seed = 1; seed <= 8; ++seed) {
      opts.seed = seed;
      const auto mc = bl_integral_numeric(young, tuple, opts);
      sum_sq += std::pow(mc.value.real() - exact, 2);
    }
    const double rms = std::sqrt(sum_sq / 8.0);
    if (n == 10000L) rms_small = rms;
    else if (n == 40000L) rms_mid = rms;
    else rms_large = rms;
  }
  // Quadrupling the samples should halve the rms error, within a factor 2.
  CHECK(rms_mid < rms_small);
  CHECK(rms_mid > rms_small / 8.0);
  CHECK(rms_large < rms_mid);
  CHECK(rms_large > rms_large / 8.0);
  CHECK(rms_large < rms_small);
}

TEST_CASE("fourier_numeric calibration on gaussians") {
  // Self-dual e^{-pi x^2}: transform equals the function to 1e-6 at the
  // output nodes (interpolation between nodes is coarser by design).
  const FunctionSpec g = standard_gaussian(1);
  const GridFunction ghat = fourier_numeric(g);
  double worst = 0.0;
  for (long idx = 0; idx < static_cast<long>(ghat.samples.size()); ++idx)
    worst = std::max(worst, std::abs(ghat.samples[idx] - eval_spec(g, ghat.node(idx))));
  CHECK(worst < 1e-6);

  // Shifted Gaussian transforms to a modulated one.
  RealGaussian shifted{1.0, Matrix::Identity(1, 1) * pi, Vector::Constant(1, 1.0)};
  const FunctionSpec fs = gaussian_spec(shifted);
  const GridFunction fhat = fourier_numeric(fs);
  const ComplexGaussianSpec closed = fourier(gaussian_spec(shifted));
  worst = 0.0;
  for (long idx = 0; idx < static_cast<long>(fhat.samples.size()); ++idx)
    worst = std::max(worst, std::abs(fhat.samples[idx] - closed.eval(fhat.node(idx))));
  CHECK(worst < 1e-6);
}

TEST_CASE("fourier_numeric of a bump satisfies Plancherel") {
  GaussianPlusBump nearly_bump = bumped(1.0, 0.0, 1.5);
  nearly_bump.gaussian.amplitude = Complex(1e-30, 0.0);  // essentially the bump alone
  const FunctionSpec f = nearly_bump;
  const GridFunction fhat = fourier_numeric(f);

  const auto l2_f = lp_norm_numeric(f, 2.0);
  const auto l2_fhat = lp_norm_numeric(fhat, 2.0);
  CHECK(l2_fhat.value == doctest::Approx(l2_f.value).epsilon(1e-5));
}

TEST_CASE("fourier_numeric 2-d matches the closed transform") {
  Rng rng(7);
  const Matrix a = testdata::random_spd(2, rng);
  const FunctionSpec g = centered_spec(a);
  QuadratureOpts opts;
  opts.points_per_axis = 256;
  const GridFunction ghat = fourier_numeric(g, opts);
  const ComplexGaussianSpec closed = fourier(centered_spec(a));
  double worst = 0.0;
  for (long idx = 0; idx < static_cast<long>(ghat.samples.size()); ++idx)
    worst = std::max(worst, std::abs(ghat.samples[idx] - closed.eval(ghat.node(idx))));
  CHECK(worst < 1e-6);
}

TEST_CASE("dist_to_gaussians basics") {
  DistanceOpts opts;
  opts.starts = 8;

  // A positive Gaussian has zero distance in both classes.
  RealGaussian g{1.3, Matrix::Identity(1, 1) * 0.8, Vector::Constant(1, 0.4)};
  const FunctionSpec fg = gaussian_spec(g);
  CHECK(dist_to_gaussians(fg, 2.0, GaussianClass::RealPositive, opts).upper_bound < 1e-6);
  CHECK(dist_to_gaussians(fg, 2.0, GaussianClass::Complex, opts).upper_bound < 1e-6);

  // A phase-rotated Gaussian is in the complex class only.
  ComplexGaussianSpec rotated = gaussian_spec(g);
  rotated.amplitude *= std::exp(Complex(0.0, 1.1));
  const FunctionSpec fr = rotated;
  const double norm = lp_norm(rotated, 2.0);
  CHECK(dist_to_gaussians(fr, 2.0, GaussianClass::Complex, opts).upper_bound < 1e-6);
  CHECK(dist_to_gaussians(fr, 2.0, GaussianClass::RealPositive, opts).upper_bound / norm >
        0.1);
}

TEST_CASE("dist_to_gaussians far bump brackets") {
  // f = g + delta phi with separated support: dist is about delta ||phi||_p.
  const double delta = 0.05, p = 1.5;
  const GaussianPlusBump f = bumped(delta, 30.0);
  const Complex bump_mass = oracle::adaptive_simpson(
      [&](double x) { return Complex(std::pow(bump_profile(x), p), 0.0); }, -1.0, 1.0, 1e-14);
  const double phi_norm = std::pow(bump_mass.real(), 1.0 / p);
  DistanceOpts opts;
  opts.starts = 8;
  const auto dist = dist_to_gaussians(f, p, GaussianClass::RealPositive, opts);
  CHECK(dist.upper_bound > delta * phi_norm * 0.98);
  CHECK(dist.upper_bound < delta * phi_norm * 1.02);
}

TEST_CASE("dist_to_gaussians upper bound contract") {
  // The reported value never exceeds ||f - g|| for explicit candidates g.
  const GaussianPlusBump f = bumped(0.25, 0.8);
  const FunctionSpec fs = f;
  DistanceOpts opts;
  opts.starts = 8;
  const auto dist = dist_to_gaussians(fs, 2.0, GaussianClass::RealPositive, opts);
  const Complex direct = oracle::adaptive_simpson(
      [&](double x) {
        Vector v(1);
        v << x;
        const Complex diff = eval_spec(fs, v) - f.gaussian.eval(v);
        return Complex(std::norm(diff), 0.0);
      },
      -10.0, 10.0, 1e-13);
  CHECK(dist.upper_bound <= std::sqrt(direct.real()) + 1e-9);
}

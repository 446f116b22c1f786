#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "blstab/stability.hpp"
#include "oracles.hpp"
#include "test_data.hpp"

using namespace blstab;
using std::numbers::pi;

namespace {

GaussianTuple frame120_extremizer(const Datum& frame) {
  GaussianTuple t;
  for (int j = 0; j < frame.size(); ++j)
    t.exponents.push_back(Matrix::Identity(1, 1) * (pi / frame.factors[j].p));
  return t;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> grid;
  for (int i = 0; i < n; ++i)
    grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return grid;
}

}  // namespace

TEST_CASE("fit_exponent recovers known power laws") {
  const auto grid = log_grid(1e-3, 1e-1, 8);
  std::vector<double> squares, lines;
  for (double t : grid) {
    squares.push_back(3.0 * t * t);
    lines.push_back(0.7 * t);
  }
  const auto fit2 = fit_exponent(grid, squares);
  CHECK(fit2.slope == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit2.half_width < 1e-8);
  const auto fit1 = fit_exponent(grid, lines);
  CHECK(fit1.slope == doctest::Approx(1.0).epsilon(1e-10));

  CHECK_THROWS_AS(fit_exponent({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("deficit_report on the 120-degree frame") {
  const Datum frame = testdata::frame120();
  const GaussianTuple ext = frame120_extremizer(frame);

  SUBCASE("extremizing Gaussians have zero deficit and zero distances") {
    std::vector<FunctionSpec> tuple;
    for (const auto& a : ext.exponents) tuple.push_back(centered_spec(a));
    const auto report = deficit_report(frame, tuple, 1.0);
    CHECK(std::abs(report.deficit) < 1e-5);
    for (double d : report.dist_ratios) CHECK(d < 1e-8);
    CHECK(report.holds_sharpened);
  }

  SUBCASE("bump perturbation gives positive deficit and implied_c") {
    std::vector<FunctionSpec> tuple;
    for (int j = 0; j < frame.size(); ++j) {
      if (j == 0) {
        GaussianPlusBump f;
        f.gaussian = centered_spec(ext.exponents[j]);
        f.amplitude = 0.3;
        f.center = Vector::Constant(1, 0.4);
        f.radius = 1.0;
        tuple.push_back(f);
      } else {
        tuple.push_back(centered_spec(ext.exponents[j]));
      }
    }
    const auto report = deficit_report(frame, tuple, 1.0);
    CHECK(report.deficit > 1e-4);
    CHECK(report.dist_ratios[0] > 1e-2);
    CHECK(report.implied_c > 0.0);
    CHECK(report.holds_sharpened);
    // Nonnegative tuple: the two Gaussian classes agree.
    CHECK(report.class_agreement_gap >= 0.0);
    CHECK(report.class_agreement_gap < 1e-4);
  }
}

TEST_CASE("corollary sweep: deficit scales as the distance squared") {
  const Datum frame = testdata::frame120();
  const PerturbationFamily family = default_family(frame, frame120_extremizer(frame), 5);
  const auto eps = log_grid(3e-3, 6e-2, 6);
  const auto sweep = corollary_sweep(frame, family, eps, 1.0);
  CHECK(sweep.fit.slope == doctest::Approx(2.0).epsilon(0.1));  // 2 +- 0.2
  // Endpoint continuity: smaller epsilon gives smaller deficit.
  CHECK(sweep.fit.values.front() < sweep.fit.values.back());
  CHECK(sweep.fit.values.front() < 1e-3);

  // Sanity inversion on the same data: deficit <= delta forces the distance
  // below C sqrt(delta).
  for (size_t i = 0; i < eps.size(); ++i) {
    const double delta = sweep.fit.values[i];
    CHECK(eps[i] <= 20.0 * std::sqrt(delta));
  }
}

TEST_CASE("opt1: perturbation deficit exponent is 2") {
  const Datum frame = testdata::frame120();
  const PerturbationFamily family = default_family(frame, frame120_extremizer(frame), 11);
  const auto result = opt1_experiment(frame, family, log_grid(1e-3, 1e-1, 8));
  CHECK(result.deficit_fit.slope == doctest::Approx(2.0).epsilon(0.05));
  CHECK(result.distance_fit.slope == doctest::Approx(1.0).epsilon(0.1));
  CHECK(result.kappa > 0.0);
  CHECK(result.u0 == doctest::Approx(1.0).epsilon(1e-6));
  // u(t) <= BL along the family.
  for (double v : result.deficit_fit.values) CHECK(v > 0.0);
}

TEST_CASE("opt2: translated bump on the (3, 3/2) pair") {
  const Datum pair = testdata::holder_pair(3.0, 1.5);
  REQUIRE(is_geometric(pair).geometric);
  const auto result =
      opt2_experiment(pair, log_grid(1e-3, 1e-1, 8), Vector::Constant(1, 1.0), 1.0);
  CHECK(result.deficit_fit.slope == doctest::Approx(3.0).epsilon(0.05));  // p_1 +- 0.15
  CHECK(result.distance_fit.slope == doctest::Approx(1.0).epsilon(0.1));
  // ||f_1||_{p_1}^{p_1} = 1 + O(delta^{p_1}) along the grid.
  for (size_t i = 0; i < result.deficit_fit.grid.size(); ++i) {
    const double delta = result.deficit_fit.grid[i];
    CHECK(result.norm_power_errors[i] <= 2.0 * std::pow(delta, 3.0));
  }
  // blbp -> 1 as delta -> 0.
  CHECK(result.deficit_fit.values.front() < 1e-8);

  CHECK_THROWS_AS(opt2_experiment(testdata::holder_pair(2.0, 2.0),
                                  log_grid(1e-2, 1e-1, 4), Vector::Constant(1, 1.0), 1.0),
                  std::invalid_argument);
}

TEST_CASE("tuple stability on the 120-degree frame") {
  const Datum frame = testdata::frame120();
  TupleStabilitySpec spec;
  spec.samples = 150;
  spec.seed = 7;
  const auto report = tuple_stability_experiment(frame, spec);
  CHECK(report.bl_const == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(report.restarts_agree);
  CHECK(report.far_restarts_converge);
  CHECK(report.max_value_drift_in_v < 1e-10);

  // High-value samples cluster near the maximizer orbit.
  for (size_t i = 0; i < report.value_ratios.size(); ++i) {
    if (report.value_ratios[i] >= 1.0 - 1e-4)
      CHECK(report.orbit_distances[i] <= 0.05);
  }
  // -log c is bounded below by a positive quadratic in dist(v, V).
  CHECK(report.quadratic_coeff_lower > 0.0);
  // The empirical modulus shrinks with delta.
  REQUIRE(report.modulus_envelope.size() >= 2);
  CHECK(report.modulus_envelope.front().second <= report.modulus_envelope.back().second);

  CHECK_THROWS_AS(
      tuple_stability_experiment(testdata::loomis_whitney(), TupleStabilitySpec{}),
      std::invalid_argument);
}

TEST_CASE("holder equality family demonstrates non-stability at p = 2") {
  const auto report = holder_equality_family({2.0, 2.0}, HolderProfile::Bump);
  CHECK(report.equality);
  CHECK(report.blbp == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(report.proportionality_residual < 1e-12);
  for (double d : report.dist_ratios) CHECK(d >= 0.1);

  // Gaussian profile control: equality with vanishing distances.
  const auto control = holder_equality_family({2.0, 2.0}, HolderProfile::Gaussian);
  CHECK(control.equality);
  for (double d : control.dist_ratios) CHECK(d < 1e-8);

  // Trilinear version.
  const auto tri = holder_equality_family({3.0, 3.0, 3.0}, HolderProfile::Bump);
  CHECK(tri.equality);
  for (double d : tri.dist_ratios) CHECK(d >= 0.1);

  CHECK_THROWS_AS(holder_equality_family({2.0, 3.0}, HolderProfile::Bump),
                  std::invalid_argument);
}

TEST_CASE("quadratic phase L2 lower bound") {
  // No phase: the Gaussian is in the class.
  CHECK(quadratic_phase_l2_lower_bound(1.0, 0.0) < 1e-6);
  // Frozen from the closed form: tilt 2 gives corr^2 = 0.7862, dist = 0.4624.
  CHECK(quadratic_phase_l2_lower_bound(1.0, 2.0) == doctest::Approx(0.4624).epsilon(1e-3));
  // Scale invariance in (b, a) -> (rb, ra).
  CHECK(quadratic_phase_l2_lower_bound(0.5, 1.0) ==
        doctest::Approx(quadratic_phase_l2_lower_bound(1.0, 2.0)).epsilon(1e-12));
}

TEST_CASE("complex extremizer construction on the quartet") {
  std::vector<Vector> dirs(4, Vector(2));
  dirs[0] << 1.0, 0.0;
  dirs[1] << 0.0, 1.0;
  dirs[2] << 1.0, 1.0;
  dirs[3] << 1.0, -1.0;
  const auto result = complex_extremizer_build(2, dirs);

  // a proportional to (2, 2, -1, -1), unit norm, first coordinate positive.
  const Vector expected = Vector{{2.0, 2.0, -1.0, -1.0}} / std::sqrt(10.0);
  CHECK((result.coefficients - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(result.phase_residual < 1e-12);

  // The modulated tuple achieves the BL constant (sqrt(1/2) for this datum).
  CHECK(result.bl_const == doctest::Approx(std::sqrt(0.5)).epsilon(1e-8));
  CHECK(std::abs(result.ratio) == doctest::Approx(result.bl_const).epsilon(1e-6));

  // Modulated factors stay far from the complex Gaussian class: certified
  // lower bounds comfortably above 1e-2, upper bounds consistent.
  for (int j = 0; j < 4; ++j) {
    CHECK(result.dist_lower[j] >= 1e-2);
    CHECK(result.dist_upper[j] >= result.dist_lower[j] - 1e-6);
  }

  // d=1, m=2 analogue: v = (1), (-1), a = (1, -1)/sqrt(2).
  std::vector<Vector> line(2, Vector(1));
  line[0] << 1.0;
  line[1] << -1.0;
  const auto pair = complex_extremizer_build(1, line);
  CHECK(std::abs(pair.ratio) == doctest::Approx(pair.bl_const).epsilon(1e-8));

  // Too few directions: trivial nullspace.
  std::vector<Vector> three(dirs.begin(), dirs.begin() + 3);
  CHECK_THROWS_AS(complex_extremizer_build(2, three), std::invalid_argument);
}

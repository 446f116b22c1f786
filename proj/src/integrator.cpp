#include "blstab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "blstab/nelder_mead.hpp"
#include "blstab/rng.hpp"

namespace blstab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTailTol = 1e-14;

int default_points(int d) {
  switch (d) {
    case 1: return 1024;
    case 2: return 160;
    case 3: return 72;
    default: return 28;
  }
}

int resolve_points(const QuadratureOpts& opts, int d) {
  if (opts.points_per_axis == 0) return default_points(d);
  if (opts.points_per_axis < 16)
    throw std::invalid_argument("quadrature: points-per-axis must be at least 16");
  return opts.points_per_axis;
}

}  // namespace

// ---------------------------------------------------------------------------
// FunctionSpec basics
// ---------------------------------------------------------------------------

double bump_profile(double u) {
  const double u2 = u * u;
  if (u2 >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - u2));
}

Vector GridFunction::hi() const {
  Vector h(dim());
  for (int i = 0; i < dim(); ++i) h(i) = lo(i) + spacing * (shape[i] - 1);
  return h;
}

Vector GridFunction::node(long flat_index) const {
  const int d = dim();
  Vector x(d);
  long rem = flat_index;
  for (int i = d - 1; i >= 0; --i) {
    x(i) = lo(i) + (rem % shape[i]) * spacing;
    rem /= shape[i];
  }
  return x;
}

Complex GridFunction::interpolate(const Vector& y) const {
  const int d = dim();
  std::vector<int> base(d);
  std::vector<double> frac(d);
  for (int i = 0; i < d; ++i) {
    const double t = (y(i) - lo(i)) / spacing;
    if (t < 0.0 || t > shape[i] - 1) return {0.0, 0.0};
    int k = static_cast<int>(std::floor(t));
    if (k >= shape[i] - 1) k = shape[i] - 2 >= 0 ? shape[i] - 2 : 0;
    base[i] = k;
    frac[i] = shape[i] == 1 ? 0.0 : t - k;
  }
  Complex acc(0.0, 0.0);
  const int corners = 1 << d;
  for (int corner = 0; corner < corners; ++corner) {
    double weight = 1.0;
    long index = 0;
    for (int i = 0; i < d; ++i) {
      const int bit = (corner >> i) & 1;
      const int ki = std::min(base[i] + bit, shape[i] - 1);
      weight *= bit ? frac[i] : 1.0 - frac[i];
      index = index * shape[i] + ki;
    }
    if (weight != 0.0) acc += weight * samples[index];
  }
  return acc;
}

int spec_dim(const FunctionSpec& f) {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ComplexGaussianSpec>) return s.dim();
        else if constexpr (std::is_same_v<T, SumOfGaussians>)
          return s.terms.empty() ? 0 : s.terms.front().dim();
        else if constexpr (std::is_same_v<T, GaussianPlusBump>) return s.gaussian.dim();
        else if constexpr (std::is_same_v<T, GridFunction>) return s.dim();
        else return s.base.dim();
      },
      f);
}

ComplexGaussianSpec to_closed(const ModulatedGaussian& f) {
  ComplexGaussianSpec g = f.base;
  g.exponent -= Complex(0.0, 1.0) * f.phase.cast<Complex>();
  return g;
}

Complex eval_spec(const FunctionSpec& f, const Vector& y) {
  return std::visit(
      [&](const auto& s) -> Complex {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ComplexGaussianSpec>) return s.eval(y);
        else if constexpr (std::is_same_v<T, SumOfGaussians>) {
          Complex acc(0.0, 0.0);
          for (const auto& term : s.terms) acc += term.eval(y);
          return acc;
        } else if constexpr (std::is_same_v<T, GaussianPlusBump>) {
          const double u = (y - s.center).norm() / s.radius;
          return s.gaussian.eval(y) + s.amplitude * bump_profile(u);
        } else if constexpr (std::is_same_v<T, GridFunction>) {
          return s.interpolate(y);
        } else {
          return to_closed(s).eval(y);
        }
      },
      f);
}

bool spec_is_zero(const FunctionSpec& f) {
  if (const auto* sum = std::get_if<SumOfGaussians>(&f)) return sum->terms.empty();
  if (const auto* grid = std::get_if<GridFunction>(&f)) {
    for (const auto& s : grid->samples)
      if (s != Complex(0.0, 0.0)) return false;
    return true;
  }
  return false;
}

namespace {

// Peak location and covariance-like exponent of |g| for box sizing.
struct SoftEnvelope {
  Matrix exponent;  // PD quadratic growth of -log of the part envelope
  Vector center;
};

SoftEnvelope gaussian_envelope(const ComplexGaussianSpec& g) {
  SoftEnvelope env;
  env.exponent = 0.5 * (g.exponent.real() + g.exponent.real().transpose());
  env.center = env.exponent.llt().solve(0.5 * g.linear.real());
  return env;
}

Box envelope_box(const SoftEnvelope& env, double tail_tol) {
  const double threshold = std::log(1.0 / tail_tol);
  const int d = static_cast<int>(env.center.size());
  const Matrix inv = env.exponent.llt().solve(Matrix::Identity(d, d));
  Box box{env.center, env.center};
  for (int i = 0; i < d; ++i) {
    const double half = std::sqrt(std::max(0.0, threshold * inv(i, i)));
    box.lo(i) -= half;
    box.hi(i) += half;
  }
  return box;
}

Box box_union(const Box& a, const Box& b) {
  Box u = a;
  for (int i = 0; i < a.lo.size(); ++i) {
    u.lo(i) = std::min(a.lo(i), b.lo(i));
    u.hi(i) = std::max(a.hi(i), b.hi(i));
  }
  return u;
}

Box widen(const Box& box, double factor) {
  Box w = box;
  const Vector mid = 0.5 * (box.lo + box.hi);
  w.lo = mid + factor * (box.lo - mid);
  w.hi = mid + factor * (box.hi - mid);
  return w;
}

}  // namespace

Box spec_box(const FunctionSpec& f, double tail_tol) {
  return std::visit(
      [&](const auto& s) -> Box {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ComplexGaussianSpec>) {
          return envelope_box(gaussian_envelope(s), tail_tol);
        } else if constexpr (std::is_same_v<T, SumOfGaussians>) {
          if (s.terms.empty()) return Box{Vector::Zero(1), Vector::Zero(1)};
          Box box = envelope_box(gaussian_envelope(s.terms.front()), tail_tol);
          for (size_t i = 1; i < s.terms.size(); ++i)
            box = box_union(box, envelope_box(gaussian_envelope(s.terms[i]), tail_tol));
          return box;
        } else if constexpr (std::is_same_v<T, GaussianPlusBump>) {
          Box box = envelope_box(gaussian_envelope(s.gaussian), tail_tol);
          Box ball{Vector(s.center.array() - s.radius), Vector(s.center.array() + s.radius)};
          return box_union(box, ball);
        } else if constexpr (std::is_same_v<T, GridFunction>) {
          return Box{s.lo, s.hi()};
        } else {
          return envelope_box(gaussian_envelope(s.base), tail_tol);
        }
      },
      f);
}

// ---------------------------------------------------------------------------
// Tensor-grid midpoint quadrature
// ---------------------------------------------------------------------------

namespace {

template <typename F>
Complex midpoint_sum(const Box& box, int n, F&& f) {
  const int d = static_cast<int>(box.lo.size());
  Vector h = box.widths() / n;
  double cell = 1.0;
  for (int i = 0; i < d; ++i) cell *= h(i);
  long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  KahanSumComplex acc;
  Vector x(d);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = 0; i < d; ++i) {
      x(i) = box.lo(i) + (rem % n + 0.5) * h(i);
      rem /= n;
    }
    acc.add(f(x));
  }
  return acc.value() * cell;
}

// Two-level midpoint with Richardson-style error estimate.
template <typename F>
ComplexQuadResult refined_quadrature(const Box& box, int n, double target_rel, F&& f) {
  const Complex coarse = midpoint_sum(box, std::max(8, n / 2), f);
  const Complex fine = midpoint_sum(box, n, f);
  ComplexQuadResult result;
  result.value = fine;
  result.error_estimate = std::abs(fine - coarse);
  result.flagged = result.error_estimate > target_rel * std::max(1e-300, std::abs(fine));
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

RealQuadResult lp_norm_numeric(const FunctionSpec& f, double p, const QuadratureOpts& opts) {
  if (std::isnan(p) || p < 1.0)
    throw std::invalid_argument("lp_norm_numeric: p must lie in [1, inf]");
  RealQuadResult result;
  if (spec_is_zero(f)) return result;

  // Closed-form shortcut: |f| of a single (possibly modulated) Gaussian.
  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) {
    result.value = lp_norm(*g, p);
    return result;
  }
  if (const auto* mg = std::get_if<ModulatedGaussian>(&f)) {
    result.value = lp_norm(to_closed(*mg), p);
    return result;
  }
  if (const auto* grid = std::get_if<GridFunction>(&f)) {
    // Sum at the native resolution; a half-sampled sum gives the estimate.
    const int d = grid->dim();
    const double cell = std::pow(grid->spacing, d);
    if (std::isinf(p)) {
      for (const auto& s : grid->samples)
        result.value = std::max(result.value, std::abs(s));
      return result;
    }
    KahanSum full, half;
    for (long idx = 0; idx < static_cast<long>(grid->samples.size()); ++idx) {
      const double w = std::pow(std::abs(grid->samples[idx]), p);
      full.add(w);
      long rem = idx;
      bool even = true;
      for (int i = d - 1; i >= 0; --i) {
        if ((rem % grid->shape[i]) % 2) even = false;
        rem /= grid->shape[i];
      }
      if (even) half.add(w);
    }
    const double mass = full.value() * cell;
    const double coarse = half.value() * cell * (1 << d);
    result.value = std::pow(mass, 1.0 / p);
    result.error_estimate =
        mass > 0.0 ? result.value * std::abs(mass - coarse) / (p * mass) : 0.0;
    result.flagged =
        result.error_estimate > opts.target_rel_error * std::max(1e-300, result.value);
    return result;
  }

  const int d = spec_dim(f);
  const Box box = widen(spec_box(f, kTailTol), std::max(1.0, opts.box_widen));
  const int n = resolve_points(opts, d);

  if (std::isinf(p)) {  // grid supremum
    double best = 0.0;
    midpoint_sum(box, n, [&](const Vector& x) {
      best = std::max(best, std::abs(eval_spec(f, x)));
      return Complex(0.0, 0.0);
    });
    result.value = best;
    return result;
  }

  const auto mass = refined_quadrature(box, n, opts.target_rel_error, [&](const Vector& x) {
    return Complex(std::pow(std::abs(eval_spec(f, x)), p), 0.0);
  });
  result.value = std::pow(mass.value.real(), 1.0 / p);
  // d(value)/value = d(mass)/mass / p
  result.error_estimate =
      mass.value.real() > 0.0
          ? result.value * mass.error_estimate / (p * mass.value.real())
          : mass.error_estimate;
  result.flagged = result.error_estimate > opts.target_rel_error * std::max(1e-300, result.value);
  return result;
}

NormPowerDecomp lp_norm_power_decomp(const FunctionSpec& f, double p,
                                     const QuadratureOpts& opts) {
  if (std::isnan(p) || p < 1.0 || std::isinf(p))
    throw std::invalid_argument("lp_norm_power_decomp: p must be finite and >= 1");
  NormPowerDecomp out;
  if (spec_is_zero(f)) return out;

  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) {
    out.base = std::pow(lp_norm(*g, p), p);
    return out;
  }
  if (const auto* mg = std::get_if<ModulatedGaussian>(&f)) {
    out.base = std::pow(lp_norm(to_closed(*mg), p), p);
    return out;
  }
  if (const auto* gb = std::get_if<GaussianPlusBump>(&f)) {
    // ||f||_p^p = ||g||_p^p + int_ball (|g + b|^p - |g|^p); exact split since
    // f = g off the bump support.
    out.base = std::pow(lp_norm(gb->gaussian, p), p);
    const int d = gb->gaussian.dim();
    Box ball{gb->center.array() - gb->radius, gb->center.array() + gb->radius};
    const int n = resolve_points(opts, d);
    const auto corr = refined_quadrature(ball, n, opts.target_rel_error, [&](const Vector& x) {
      const double u = (x - gb->center).norm() / gb->radius;
      const Complex g = gb->gaussian.eval(x);
      const double with = std::pow(std::abs(g + gb->amplitude * bump_profile(u)), p);
      const double without = std::pow(std::abs(g), p);
      return Complex(with - without, 0.0);
    });
    out.correction = corr.value.real();
    out.error = corr.error_estimate;
    return out;
  }
  const auto full = lp_norm_numeric(f, p, opts);
  out.correction = std::pow(full.value, p);
  out.error = full.value > 0.0 ? p * std::pow(full.value, p - 1.0) * full.error_estimate : 0.0;
  return out;
}

double NormPowerDecomp::norm(double p) const { return std::pow(base + correction, 1.0 / p); }

// ---------------------------------------------------------------------------
// Multilinear part expansion for the BL form
// ---------------------------------------------------------------------------

namespace {

struct Part {
  bool is_gaussian = true;
  ComplexGaussianSpec gauss;
  double amplitude = 0.0;  // bump fields
  Vector center;
  double radius = 1.0;

  Complex eval(const Vector& y) const {
    if (is_gaussian) return gauss.eval(y);
    return amplitude * bump_profile((y - center).norm() / radius);
  }
  SoftEnvelope envelope(double tail_tol) const {
    if (is_gaussian) return gaussian_envelope(gauss);
    const int d = static_cast<int>(center.size());
    const double threshold = std::log(1.0 / tail_tol);
    return SoftEnvelope{Matrix::Identity(d, d) * (threshold / (radius * radius)), center};
  }
};

// Factors decompose into additive parts; empty result means the factor is
// identically zero. Throws for grid functions (no closed decomposition).
std::vector<Part> factor_parts(const FunctionSpec& f) {
  std::vector<Part> parts;
  if (const auto* g = std::get_if<ComplexGaussianSpec>(&f)) {
    parts.push_back(Part{true, *g, 0.0, Vector(), 1.0});
  } else if (const auto* sum = std::get_if<SumOfGaussians>(&f)) {
    for (const auto& term : sum->terms) parts.push_back(Part{true, term, 0.0, Vector(), 1.0});
  } else if (const auto* gb = std::get_if<GaussianPlusBump>(&f)) {
    parts.push_back(Part{true, gb->gaussian, 0.0, Vector(), 1.0});
    if (gb->amplitude != 0.0)
      parts.push_back(Part{false, ComplexGaussianSpec{}, gb->amplitude, gb->center, gb->radius});
  } else if (const auto* mg = std::get_if<ModulatedGaussian>(&f)) {
    parts.push_back(Part{true, to_closed(*mg), 0.0, Vector(), 1.0});
  } else {
    throw std::invalid_argument("bl form: grid functions have no part decomposition");
  }
  return parts;
}

// Envelope of a product of pulled-back parts: H = sum B_j^T A_j B_j with the
// anchor minimizing the weighted misfit sum |A_j^{1/2}(B_j x - c_j)|^2.
struct ProductEnvelope {
  Matrix hessian;
  Vector anchor;
  bool decaying = false;
};

ProductEnvelope product_envelope(const Datum& datum, const std::vector<SoftEnvelope>& envs) {
  const int d = datum.dim;
  ProductEnvelope out;
  out.hessian = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (int j = 0; j < datum.size(); ++j) {
    const Matrix& b = datum.factors[j].map;
    out.hessian += b.transpose() * envs[j].exponent * b;
    rhs += b.transpose() * envs[j].exponent * envs[j].center;
  }
  out.hessian = symmetrize(out.hessian);
  if (min_eigenvalue(out.hessian) <= 0.0) return out;
  out.anchor = out.hessian.llt().solve(rhs);
  out.decaying = true;
  return out;
}

Box product_box(const ProductEnvelope& env, double tail_tol, double widen_factor) {
  SoftEnvelope soft{env.hessian, env.anchor};
  return widen(envelope_box(soft, tail_tol), std::max(1.0, widen_factor));
}

}  // namespace

BlFormDecomp bl_form_decomposed(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                                const QuadratureOpts& opts) {
  if (static_cast<int>(tuple.size()) != datum.size())
    throw std::invalid_argument("bl form: tuple length does not match datum");
  BlFormDecomp out;
  const int d = datum.dim;
  const int m = datum.size();

  std::vector<std::vector<Part>> parts;
  parts.reserve(m);
  for (const auto& f : tuple) {
    parts.push_back(factor_parts(f));
    if (parts.back().empty()) return out;  // a zero factor kills the product
    if (spec_dim(f) != datum.codim(static_cast<int>(parts.size()) - 1))
      throw std::invalid_argument("bl form: factor dimension mismatch");
  }

  std::vector<int> choice(m, 0);
  KahanSumComplex base_acc, corr_acc;
  KahanSum err_acc;
  while (true) {
    bool all_gaussian = true;
    for (int j = 0; j < m; ++j)
      if (!parts[j][choice[j]].is_gaussian) all_gaussian = false;

    if (all_gaussian) {
      // Closed form via the pullback exponent.
      CMatrix s_total = CMatrix::Zero(d, d);
      CVector w_total = CVector::Zero(d);
      Complex amplitude(1.0, 0.0);
      for (int j = 0; j < m; ++j) {
        const auto& g = parts[j][choice[j]].gauss;
        const CMatrix b = datum.factors[j].map.cast<Complex>();
        s_total += b.transpose() * g.exponent * b;
        w_total += b.transpose() * g.linear;
        amplitude *= g.amplitude;
      }
      s_total = 0.5 * (s_total + s_total.transpose()).eval();
      if (min_eigenvalue(0.5 * (s_total.real() + s_total.real().transpose())) <= 0.0)
        throw std::invalid_argument("bl form: product of Gaussian parts does not decay");
      base_acc.add(amplitude * gaussian_integral(s_total, w_total));
    } else {
      std::vector<SoftEnvelope> envs;
      envs.reserve(m);
      for (int j = 0; j < m; ++j) envs.push_back(parts[j][choice[j]].envelope(kTailTol));
      const ProductEnvelope env = product_envelope(datum, envs);
      if (!env.decaying)
        throw std::invalid_argument("bl form: no decaying envelope; explicit box required");
      const Box box = product_box(env, kTailTol, opts.box_widen);
      const int n = resolve_points(opts, d);
      const auto term =
          refined_quadrature(box, n, opts.target_rel_error, [&](const Vector& x) {
            Complex prod(1.0, 0.0);
            for (int j = 0; j < m; ++j)
              prod *= parts[j][choice[j]].eval(datum.factors[j].map * x);
            return prod;
          });
      corr_acc.add(term.value);
      err_acc.add(term.error_estimate);
    }

    int axis = m - 1;
    while (axis >= 0 && ++choice[axis] == static_cast<int>(parts[axis].size())) {
      choice[axis] = 0;
      --axis;
    }
    if (axis < 0) break;
  }
  out.base = base_acc.value();
  out.correction = corr_acc.value();
  out.error = err_acc.value();
  return out;
}

// ---------------------------------------------------------------------------
// bl_integral_numeric: direct grid / Monte Carlo evaluation
// ---------------------------------------------------------------------------

namespace {

// Envelope over all factors, treating every part additively (bump and grid
// factors enter through their soft envelopes).
ProductEnvelope tuple_envelope(const Datum& datum, const std::vector<FunctionSpec>& tuple) {
  std::vector<SoftEnvelope> envs;
  const double threshold = std::log(1.0 / kTailTol);
  for (int j = 0; j < datum.size(); ++j) {
    const auto& f = tuple[j];
    if (const auto* grid = std::get_if<GridFunction>(&f)) {
      const Box hull{grid->lo, grid->hi()};
      const int dj = grid->dim();
      Matrix a = Matrix::Zero(dj, dj);
      for (int i = 0; i < dj; ++i) {
        const double half = std::max(0.5 * (hull.hi(i) - hull.lo(i)), 1e-6);
        a(i, i) = threshold / (half * half);
      }
      envs.push_back(SoftEnvelope{a, 0.5 * (hull.lo + hull.hi)});
      continue;
    }
    // Soft envelope of the widest additive part plus bump/sum spread: use the
    // overall spec box, which already unions parts.
    const Box box = spec_box(f, kTailTol);
    const int dj = spec_dim(f);
    Matrix a = Matrix::Zero(dj, dj);
    Vector mid = 0.5 * (box.lo + box.hi);
    for (int i = 0; i < dj; ++i) {
      const double half = std::max(0.5 * (box.hi(i) - box.lo(i)), 1e-6);
      a(i, i) = threshold / (half * half);
    }
    envs.push_back(SoftEnvelope{a, mid});
  }
  return product_envelope(datum, envs);
}

ComplexQuadResult monte_carlo_integral(const Datum& datum,
                                       const std::vector<FunctionSpec>& tuple,
                                       const ProductEnvelope& env,
                                       const QuadratureOpts& opts) {
  if (opts.seed == 0)
    throw std::invalid_argument("monte carlo: a nonzero seed is mandatory");
  const int d = datum.dim;
  // Importance density proportional to e^{-<H delta, delta>} (covariance
  // H^{-1}/2); for Gaussian tuples H is the pulled-back exponent of the
  // integrand envelope.
  const Matrix h = env.hessian;
  const Matrix cov_chol = Eigen::LLT<Matrix>(h.llt().solve(Matrix::Identity(d, d)) * 0.5)
                              .matrixL();
  const double log_norm = 0.5 * log_det_spd(h) - 0.5 * d * std::log(kPi);
  Rng rng(opts.seed);
  KahanSumComplex acc;
  KahanSum acc_sq;
  Vector z(d);
  for (long i = 0; i < opts.mc_samples; ++i) {
    for (int k = 0; k < d; ++k) z(k) = rng.normal();
    const Vector x = env.anchor + cov_chol * z;
    const Vector delta = x - env.anchor;
    const double log_pdf = log_norm - delta.dot(h * delta);
    Complex prod(1.0, 0.0);
    for (int j = 0; j < datum.size(); ++j)
      prod *= eval_spec(tuple[j], datum.factors[j].map * x);
    const Complex w = prod * std::exp(-log_pdf);
    acc.add(w);
    acc_sq.add(std::norm(w));
  }
  const double n = static_cast<double>(opts.mc_samples);
  ComplexQuadResult result;
  result.value = acc.value() / n;
  const double mean_sq = acc_sq.value() / n;
  const double variance = std::max(0.0, mean_sq - std::norm(result.value));
  result.error_estimate = std::sqrt(variance / n);
  result.flagged =
      result.error_estimate > opts.target_rel_error * std::max(1e-300, std::abs(result.value));
  return result;
}

}  // namespace

ComplexQuadResult bl_integral_numeric(const Datum& datum,
                                      const std::vector<FunctionSpec>& tuple,
                                      const QuadratureOpts& opts) {
  if (static_cast<int>(tuple.size()) != datum.size())
    throw std::invalid_argument("bl_integral_numeric: tuple length does not match datum");
  for (int j = 0; j < datum.size(); ++j) {
    if (spec_is_zero(tuple[j])) return ComplexQuadResult{};
    if (spec_dim(tuple[j]) != datum.codim(j))
      throw std::invalid_argument("bl_integral_numeric: factor dimension mismatch");
  }

  const ProductEnvelope env = tuple_envelope(datum, tuple);
  if (!env.decaying)
    throw std::invalid_argument(
        "bl_integral_numeric: no decaying envelope detected; explicit box required");

  const bool use_mc = opts.method == QuadMethod::MonteCarlo || datum.dim > 4;
  if (use_mc) return monte_carlo_integral(datum, tuple, env, opts);

  const Box box = product_box(env, kTailTol, opts.box_widen);
  const int n = resolve_points(opts, datum.dim);
  return refined_quadrature(box, n, opts.target_rel_error, [&](const Vector& x) {
    Complex prod(1.0, 0.0);
    for (int j = 0; j < datum.size(); ++j)
      prod *= eval_spec(tuple[j], datum.factors[j].map * x);
    return prod;
  });
}

RealQuadResult blbp_ratio(const Datum& datum, const std::vector<FunctionSpec>& tuple,
                          const QuadratureOpts& opts) {
  const ComplexQuadResult integral = bl_integral_numeric(datum, tuple, opts);
  double norms = 1.0;
  double rel_err = std::abs(integral.value) > 0.0
                       ? integral.error_estimate / std::abs(integral.value)
                       : integral.error_estimate;
  for (int j = 0; j < datum.size(); ++j) {
    const auto norm = lp_norm_numeric(tuple[j], datum.factors[j].p, opts);
    if (norm.value <= 0.0)
      throw std::invalid_argument("blbp_ratio: factor " + std::to_string(j) +
                                  " has zero norm");
    norms *= norm.value;
    rel_err += norm.error_estimate / norm.value;
  }
  RealQuadResult result;
  result.value = std::abs(integral.value) / norms;
  result.error_estimate = result.value * rel_err;
  result.flagged = integral.flagged;
  return result;
}

// ---------------------------------------------------------------------------
// Numeric Fourier transform (radix-2 FFT per axis)
// ---------------------------------------------------------------------------

namespace {

void fft_inplace(std::vector<Complex>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * kPi / static_cast<double>(len);
    const Complex w_len(std::cos(angle), std::sin(angle));
    for (size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= w_len;
      }
    }
  }
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

GridFunction fourier_numeric(const FunctionSpec& f, const QuadratureOpts& opts) {
  const int d = spec_dim(f);
  const Box raw = spec_box(f, kTailTol);
  // Symmetric box with a common half-width keeps the frequency grid uniform.
  double half = 1.0;
  for (int i = 0; i < d; ++i)
    half = std::max({half, std::abs(raw.lo(i)), std::abs(raw.hi(i))});
  half *= std::max(1.0, opts.box_widen);
  const int n = next_pow2(opts.points_per_axis == 0 ? 512 : opts.points_per_axis);
  const double h = 2.0 * half / n;

  // Sample f on nodes x_k = -half + k h.
  std::vector<int> shape(d, n);
  long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  std::vector<Complex> values(total);
  Vector x(d);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = d - 1; i >= 0; --i) {
      x(i) = -half + (rem % n) * h;
      rem /= n;
    }
    values[idx] = eval_spec(f, x);
  }

  // Per axis: f^(xi_m) = h e^{-2 pi i lo xi_m} sum_k [(-1)^k f_k] e^{-2 pi i k m / n},
  // with xi_m = (m - n/2) / (n h); the (-1)^k factor centers the frequency grid.
  const double dxi = 1.0 / (n * h);
  for (int axis = 0; axis < d; ++axis) {
    long inner = 1;
    for (int i = axis + 1; i < d; ++i) inner *= n;
    const long outer = total / (inner * n);
    std::vector<Complex> line(n);
    for (long o = 0; o < outer; ++o) {
      for (long in = 0; in < inner; ++in) {
        const long base = o * n * inner + in;
        for (int k = 0; k < n; ++k)
          line[k] = values[base + k * inner] * (k % 2 == 0 ? 1.0 : -1.0);
        fft_inplace(line);
        // The (-1)^k pre-twiddle shifts the spectrum, so DFT bin m already
        // corresponds to xi_m = (m - n/2) dxi.
        for (int m = 0; m < n; ++m) {
          const double xi = (m - n / 2) * dxi;
          const Complex phase = std::exp(Complex(0.0, 2.0 * kPi * half * xi));
          values[base + m * inner] = h * phase * line[m];
        }
      }
    }
  }

  GridFunction out;
  out.lo = Vector::Constant(d, -(n / 2) * dxi);
  out.spacing = dxi;
  out.shape = shape;
  out.samples = std::move(values);

  // Aliasing check: boundary energy must be negligible.
  double boundary_max = 0.0, global_max = 0.0;
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    bool on_boundary = false;
    for (int i = d - 1; i >= 0; --i) {
      const int k = static_cast<int>(rem % n);
      rem /= n;
      if (k == 0 || k == n - 1) on_boundary = true;
    }
    const double mag = std::abs(out.samples[idx]);
    global_max = std::max(global_max, mag);
    if (on_boundary) boundary_max = std::max(boundary_max, mag);
  }
  if (global_max > 0.0 && boundary_max > 1e-8 * global_max)
    throw std::runtime_error(
        "fourier_numeric: aliasing detected (boundary energy); enlarge the box");
  return out;
}

// ---------------------------------------------------------------------------
// Distance to the Gaussian classes
// ---------------------------------------------------------------------------

namespace {

struct DistanceObjective {
  // Grid samples of f, flattened for the hot loop.
  std::vector<double> coords;  // n * dim, row-major
  std::vector<double> f_re, f_im;
  double cell = 1.0;
  double p = 2.0;
  int dim = 1;
  GaussianClass cls = GaussianClass::RealPositive;

  int tri_size() const { return dim * (dim + 1) / 2; }
  int param_count() const {
    // RealPositive: chol(A) + v + log c ; Complex: chol(A) + Re/Im w + Re/Im c.
    return cls == GaussianClass::RealPositive ? tri_size() + dim + 1
                                              : tri_size() + 2 * dim + 2;
  }

  struct Raw {
    Matrix a;        // real PD quadratic form
    Vector w_re, w_im;
    Complex amp{1.0, 0.0};
  };

  Raw decode_raw(const Vector& theta) const {
    Raw raw;
    Matrix l = Matrix::Zero(dim, dim);
    int at = 0;
    for (int i = 0; i < dim; ++i)
      for (int k = 0; k <= i; ++k) {
        l(i, k) = i == k ? std::exp(std::clamp(theta(at), -12.0, 12.0)) : theta(at);
        ++at;
      }
    raw.a = l * l.transpose();
    raw.w_re = Vector::Zero(dim);
    raw.w_im = Vector::Zero(dim);
    if (cls == GaussianClass::RealPositive) {
      Vector v(dim);
      for (int i = 0; i < dim; ++i) v(i) = theta(at++);
      const double log_c = std::clamp(theta(at++), -40.0, 40.0);
      // c e^{-<A(y-v),y-v>} = c e^{-<Av,v>} e^{-<Ay,y> + (2Av).y}
      raw.w_re = 2.0 * raw.a * v;
      raw.amp = Complex(std::exp(log_c - v.dot(raw.a * v)), 0.0);
    } else {
      for (int i = 0; i < dim; ++i) {
        raw.w_re(i) = theta(at + i);
        raw.w_im(i) = theta(at + dim + i);
      }
      at += 2 * dim;
      raw.amp = Complex(theta(at), theta(at + 1));
      if (std::abs(raw.amp) < 1e-300) raw.amp = Complex(1e-300, 0.0);
    }
    return raw;
  }

  ComplexGaussianSpec decode(const Vector& theta) const {
    const Raw raw = decode_raw(theta);
    ComplexGaussianSpec g;
    g.exponent = raw.a.cast<Complex>();
    g.linear = raw.w_re.cast<Complex>() + Complex(0.0, 1.0) * raw.w_im.cast<Complex>();
    g.amplitude = raw.amp;
    return g;
  }

  double operator()(const Vector& theta) const {
    const Raw raw = decode_raw(theta);
    const int d = dim;
    double a_flat[36];
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) a_flat[i * d + k] = raw.a(i, k);
    const double amp_re = raw.amp.real(), amp_im = raw.amp.imag();
    const bool has_phase = cls == GaussianClass::Complex;
    const double half_p = 0.5 * p;
    const bool p_is_two = p == 2.0;

    KahanSum acc, g_grid;
    const size_t n = f_re.size();
    for (size_t idx = 0; idx < n; ++idx) {
      const double* x = &coords[idx * d];
      double quad = 0.0, lin_re = 0.0, lin_im = 0.0;
      for (int i = 0; i < d; ++i) {
        double row = 0.0;
        for (int k = 0; k < d; ++k) row += a_flat[i * d + k] * x[k];
        quad += row * x[i];
        lin_re += raw.w_re(i) * x[i];
        if (has_phase) lin_im += raw.w_im(i) * x[i];
      }
      const double mag = std::exp(-quad + lin_re);
      double g_re = amp_re * mag, g_im = amp_im * mag;
      if (has_phase && lin_im != 0.0) {
        const double c = std::cos(lin_im), s = std::sin(lin_im);
        const double re = g_re * c - g_im * s;
        g_im = g_re * s + g_im * c;
        g_re = re;
      }
      const double dre = f_re[idx] - g_re, dim_ = f_im[idx] - g_im;
      const double diff_sq = dre * dre + dim_ * dim_;
      const double g_sq = g_re * g_re + g_im * g_im;
      if (p_is_two) {
        acc.add(diff_sq);
        g_grid.add(g_sq);
      } else {
        acc.add(std::pow(diff_sq, half_p));
        g_grid.add(std::pow(g_sq, half_p));
      }
    }
    double total = acc.value() * cell;
    // Mass of g escaping the grid box: closed form minus grid form.
    const double det_pa = std::exp(log_det_spd(p * raw.a));
    const Vector a_inv_w = raw.a.llt().solve(raw.w_re);
    const double g_closed = std::pow(std::abs(raw.amp), p) *
                            std::pow(kPi, 0.5 * d) / std::sqrt(det_pa) *
                            std::exp(0.25 * p * raw.w_re.dot(a_inv_w));
    total += std::max(0.0, g_closed - g_grid.value() * cell);
    return std::pow(total, 1.0 / p);
  }
};

}  // namespace

DistanceResult dist_to_gaussians(const FunctionSpec& f, double p, GaussianClass cls,
                                 const DistanceOpts& opts) {
  if (std::isnan(p) || p < 1.0 || std::isinf(p))
    throw std::invalid_argument("dist_to_gaussians: p must be finite and >= 1");
  const int d = spec_dim(f);

  DistanceObjective obj;
  obj.p = p;
  obj.dim = d;
  obj.cls = cls;
  const Box box = widen(spec_box(f, kTailTol), 1.4);
  const int n = opts.quad.points_per_axis
                    ? opts.quad.points_per_axis
                    : (d == 1 ? 1024 : d == 2 ? 96 : 32);
  Vector h = box.widths() / n;
  obj.cell = 1.0;
  for (int i = 0; i < d; ++i) obj.cell *= h(i);
  long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  obj.coords.reserve(total * d);
  obj.f_re.reserve(total);
  obj.f_im.reserve(total);
  Vector x(d);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = 0; i < d; ++i) {
      x(i) = box.lo(i) + (rem % n + 0.5) * h(i);
      rem /= n;
    }
    const Complex fv = eval_spec(f, x);
    for (int i = 0; i < d; ++i) obj.coords.push_back(x(i));
    obj.f_re.push_back(fv.real());
    obj.f_im.push_back(fv.imag());
  }

  auto point_at = [&](size_t idx) {
    Vector pt(d);
    for (int i = 0; i < d; ++i) pt(i) = obj.coords[idx * d + i];
    return pt;
  };
  auto f_abs = [&](size_t idx) {
    return std::hypot(obj.f_re[idx], obj.f_im[idx]);
  };

  // Moment matching of |f|^p: mean, covariance, mass.
  KahanSum mass_acc;
  Vector mean = Vector::Zero(d);
  for (size_t i = 0; i < obj.f_re.size(); ++i) {
    const double w = std::pow(f_abs(i), p);
    mass_acc.add(w);
    mean += w * point_at(i);
  }
  const double mass = mass_acc.value() * obj.cell;
  DistanceResult result;
  if (mass <= 0.0) throw std::invalid_argument("dist_to_gaussians: ||f||_p vanishes");
  mean *= obj.cell / mass;
  Matrix cov = Matrix::Zero(d, d);
  for (size_t i = 0; i < obj.f_re.size(); ++i) {
    const double w = std::pow(f_abs(i), p);
    const Vector delta = point_at(i) - mean;
    cov += w * delta * delta.transpose();
  }
  cov *= obj.cell / mass;
  cov = symmetrize(cov) + 1e-10 * Matrix::Identity(d, d);
  // |g|^p of c e^{-<A(y-v),y-v>} is Gaussian with covariance (2 p A)^{-1}.
  const Matrix a0 = 0.5 / p * cov.llt().solve(Matrix::Identity(d, d));
  const double gaussian_mass =
      gaussian_integral((p * a0).cast<Complex>(), CVector::Zero(d)).real();
  const double c0 = std::pow(mass / gaussian_mass, 1.0 / p);

  auto encode = [&](const Matrix& a, const Vector& v, Complex c) {
    Vector theta = Vector::Zero(obj.param_count());
    const Matrix l = Eigen::LLT<Matrix>(a).matrixL();
    int at = 0;
    for (int i = 0; i < d; ++i)
      for (int k = 0; k <= i; ++k) theta(at++) = i == k ? std::log(l(i, i)) : l(i, k);
    if (cls == GaussianClass::RealPositive) {
      for (int i = 0; i < d; ++i) theta(at++) = v(i);
      theta(at) = std::log(std::max(1e-300, std::abs(c)));
    } else {
      // linear term of c e^{-<A(y-v),y-v>} expanded: w = 2 A v (real start)
      const Vector w = 2.0 * a * v;
      for (int i = 0; i < d; ++i) theta(at + i) = w(i);
      at += 2 * d;
      // amplitude absorbs e^{-<Av,v>}
      const Complex amp = c * std::exp(-v.dot(a * v));
      theta(at) = amp.real();
      theta(at + 1) = amp.imag();
    }
    return theta;
  };

  std::vector<Vector> starts;
  Complex phase0(1.0, 0.0);
  {  // align the start's phase with f at its mean (complex class)
    const Complex fv = eval_spec(f, mean);
    if (std::abs(fv) > 0.0) phase0 = fv / std::abs(fv);
  }
  starts.push_back(encode(a0, mean, cls == GaussianClass::Complex ? phase0 * c0 : Complex(c0)));
  if (const auto* gb = std::get_if<GaussianPlusBump>(&f)) {
    // The Gaussian part is an excellent candidate for small perturbations.
    const ComplexGaussianSpec& g = gb->gaussian;
    const Matrix ar = 0.5 * (g.exponent.real() + g.exponent.real().transpose());
    const Vector v = ar.llt().solve(0.5 * g.linear.real());
    const Complex amp = g.amplitude * std::exp(v.dot(ar * v));
    starts.push_back(encode(ar, v, amp));
  }
  Rng rng(opts.seed);
  const size_t deterministic = starts.size();
  while (starts.size() < static_cast<size_t>(opts.starts)) {
    Vector theta = starts[rng.next_u64() % deterministic];
    for (int i = 0; i < theta.size(); ++i) theta(i) += 0.25 * rng.normal();
    starts.push_back(theta);
  }

  double best = std::numeric_limits<double>::infinity();
  Vector best_theta;
  bool converged = false;
  for (const auto& s : starts) {
    const auto run = nelder_mead(obj, s, 0.1, opts.max_iters, opts.tol);
    if (run.value < best) {
      best = run.value;
      best_theta = run.x;
      converged = run.converged;
    }
  }
  // Polish the winner.
  const auto polish = nelder_mead(obj, best_theta, 0.01, opts.max_iters, opts.tol * 0.1);
  if (polish.value < best) {
    best = polish.value;
    best_theta = polish.x;
    converged = polish.converged;
  }

  result.upper_bound = best;
  result.argmin = obj.decode(best_theta);
  result.converged = converged;
  return result;
}

}  // namespace blstab

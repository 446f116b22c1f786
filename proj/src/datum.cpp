#include "blstab/datum.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "blstab/rng.hpp"

namespace blstab {

Datum make_datum(int dim, std::vector<Factor> factors) {
  if (dim < 1) throw std::invalid_argument("datum: ambient dimension must be positive");
  if (factors.empty()) throw std::invalid_argument("datum: at least one factor required");
  for (size_t j = 0; j < factors.size(); ++j) {
    const auto& f = factors[j];
    const std::string tag = "datum factor " + std::to_string(j);
    if (f.map.cols() != dim)
      throw std::invalid_argument(tag + ": matrix has " + std::to_string(f.map.cols()) +
                                  " columns, expected " + std::to_string(dim));
    const int dj = static_cast<int>(f.map.rows());
    if (dj < 1 || dj > dim)
      throw std::invalid_argument(tag + ": row count must lie in [1, d]");
    if (numerical_rank(f.map) != dj)
      throw std::invalid_argument(tag + ": matrix is not surjective (row rank deficient)");
    if (std::isnan(f.p) || f.p < 1.0)
      throw std::invalid_argument(tag + ": exponent must lie in [1, inf]");
  }
  Datum d;
  d.dim = dim;
  d.factors = std::move(factors);
  return d;
}

SubspaceBasis make_subspace(Matrix rows, double tol) {
  const int k = static_cast<int>(rows.rows());
  if (k > 0) {
    Matrix gram = rows * rows.transpose();
    if ((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("subspace basis rows are not orthonormal");
  }
  return SubspaceBasis{std::move(rows)};
}

SubspaceBasis subspace_from_span(const Matrix& span, int ambient_dim) {
  if (span.rows() == 0) return SubspaceBasis{Matrix(0, ambient_dim)};
  if (span.cols() != ambient_dim)
    throw std::invalid_argument("subspace span has wrong ambient dimension");
  return SubspaceBasis{orthonormal_row_basis(span)};
}

double scaling_defect(const Datum& datum) {
  KahanSum acc;
  acc.add(static_cast<double>(datum.dim));
  for (int j = 0; j < datum.size(); ++j) acc.add(-datum.q(j) * datum.codim(j));
  return acc.value();
}

double subcriticality_defect(const Datum& datum, const SubspaceBasis& v) {
  if (v.ambient_dim() != datum.dim)
    throw std::invalid_argument("subspace has wrong ambient dimension");
  KahanSum acc;
  for (int j = 0; j < datum.size(); ++j) {
    if (v.dim() == 0) continue;
    const Matrix image = datum.factors[j].map * v.rows.transpose();  // d_j x k
    acc.add(datum.q(j) * numerical_rank(image));
  }
  acc.add(-static_cast<double>(v.dim()));
  return acc.value();
}

namespace {

bool known_projection(const std::vector<Matrix>& projections, const Matrix& p) {
  for (const auto& q : projections)
    if ((q - p).cwiseAbs().maxCoeff() < 1e-8) return true;
  return false;
}

void push_candidate(std::vector<SubspaceBasis>& out, std::vector<Matrix>& projections,
                    SubspaceBasis v, int max_dim) {
  if (v.dim() > max_dim) return;
  Matrix p = v.projection();
  if (known_projection(projections, p)) return;
  projections.push_back(std::move(p));
  out.push_back(std::move(v));
}

}  // namespace

std::vector<SubspaceBasis> candidate_subspaces(const Datum& datum, int max_dim,
                                               const CandidateOpts& opts) {
  const int d = datum.dim;
  if (max_dim > d) throw std::invalid_argument("candidate_subspaces: max_dim exceeds d");
  if (max_dim < 0) max_dim = d;

  std::vector<SubspaceBasis> out;
  std::vector<Matrix> projections;
  push_candidate(out, projections, SubspaceBasis{Matrix(0, d)}, max_dim);

  // Pool of all rows of all maps; spans of every subset.
  Matrix rows(0, d);
  for (const auto& f : datum.factors) {
    Matrix grown(rows.rows() + f.map.rows(), d);
    grown << rows, f.map;
    rows = std::move(grown);
  }
  const int n_rows = static_cast<int>(rows.rows());
  if (n_rows <= 20) {
    for (uint32_t mask = 1; mask < (1u << n_rows); ++mask) {
      Matrix span(0, d);
      for (int i = 0; i < n_rows; ++i) {
        if (!(mask & (1u << i))) continue;
        Matrix grown(span.rows() + 1, d);
        grown << span, rows.row(i);
        span = std::move(grown);
      }
      push_candidate(out, projections, subspace_from_span(span, d), max_dim);
    }
  }

  // Kernel intersections of subfamilies: null space of the stacked maps.
  const int m = datum.size();
  if (m <= 16) {
    for (uint32_t mask = 1; mask < (1u << m); ++mask) {
      Matrix stacked(0, d);
      for (int j = 0; j < m; ++j) {
        if (!(mask & (1u << j))) continue;
        Matrix grown(stacked.rows() + datum.factors[j].map.rows(), d);
        grown << stacked, datum.factors[j].map;
        stacked = std::move(grown);
      }
      push_candidate(out, projections, SubspaceBasis{null_space_basis(stacked)}, max_dim);
    }
  }

  Rng rng(opts.seed);
  for (int k = 1; k <= max_dim; ++k) {
    for (int trial = 0; trial < opts.random_per_dim; ++trial) {
      Matrix span(k, d);
      for (int i = 0; i < k; ++i)
        for (int c = 0; c < d; ++c) span(i, c) = rng.normal();
      push_candidate(out, projections, subspace_from_span(span, d), max_dim);
    }
  }
  return out;
}

FeasibilityVerdict classify_finiteness(const Datum& datum, const CandidateOpts& opts) {
  FeasibilityVerdict verdict;
  verdict.scaling_defect = scaling_defect(datum);

  const auto candidates = candidate_subspaces(datum, datum.dim, opts);
  double worst = std::numeric_limits<double>::infinity();
  std::optional<SubspaceBasis> worst_witness;
  for (const auto& v : candidates) {
    const double defect = subcriticality_defect(datum, v);
    if (defect < worst) {
      worst = defect;
      worst_witness = v;
    }
  }
  verdict.worst_defect = worst;

  if (std::abs(verdict.scaling_defect) > 1e-12) {
    verdict.tag = FeasibilityTag::InfiniteWithWitness;
    // The full space witnesses the scaling violation.
    verdict.witness = SubspaceBasis{Matrix::Identity(datum.dim, datum.dim)};
    return verdict;
  }
  if (worst < -opts.defect_tol) {
    verdict.tag = FeasibilityTag::InfiniteWithWitness;
    verdict.witness = worst_witness;
    return verdict;
  }
  // Subset-span / kernel-intersection enumeration is complete for rank-one
  // data; beyond that the verdict stays on the sampled candidates.
  verdict.tag = datum.rank_one() ? FeasibilityTag::CertifiedFinite
                                 : FeasibilityTag::FeasibleOnCandidates;
  return verdict;
}

SimplicityVerdict classify_simplicity(const Datum& datum, const CandidateOpts& opts) {
  const auto feasibility = classify_finiteness(datum, opts);
  if (feasibility.tag == FeasibilityTag::InfiniteWithWitness)
    throw std::invalid_argument("classify_simplicity: datum has an infinite BL constant");

  SimplicityVerdict verdict;
  const auto candidates = candidate_subspaces(datum, datum.dim, opts);
  double worst = std::numeric_limits<double>::infinity();
  std::optional<SubspaceBasis> worst_witness;
  for (const auto& v : candidates) {
    if (v.dim() == 0 || v.dim() == datum.dim) continue;
    const double defect = subcriticality_defect(datum, v);
    if (defect < worst) {
      worst = defect;
      worst_witness = v;
    }
  }
  verdict.worst_proper_defect = worst;
  if (worst <= opts.defect_tol) {
    verdict.tag = SimplicityTag::NotSimpleWithWitness;
    verdict.witness = worst_witness;
    return verdict;
  }
  verdict.tag = datum.rank_one() ? SimplicityTag::Simple : SimplicityTag::SimpleOnCandidates;
  return verdict;
}

GeometricCheck is_geometric(const Datum& datum, double tol) {
  GeometricCheck check;
  Matrix frame = Matrix::Zero(datum.dim, datum.dim);
  for (int j = 0; j < datum.size(); ++j) {
    const Matrix& b = datum.factors[j].map;
    const int dj = datum.codim(j);
    check.projection_residual = std::max(
        check.projection_residual,
        operator_norm(b * b.transpose() - Matrix::Identity(dj, dj)));
    frame += datum.q(j) * b.transpose() * b;
  }
  check.frame_residual = operator_norm(frame - Matrix::Identity(datum.dim, datum.dim));
  check.geometric = check.projection_residual <= tol && check.frame_residual <= tol;
  return check;
}

Datum from_q_convention(const std::vector<Matrix>& maps, const std::vector<double>& q) {
  if (maps.empty() || maps.size() != q.size())
    throw std::invalid_argument("from_q_convention: maps and exponents must align");
  std::vector<Factor> factors;
  factors.reserve(maps.size());
  for (size_t j = 0; j < maps.size(); ++j) {
    if (q[j] < 0.0 || q[j] > 1.0)
      throw std::invalid_argument("from_q_convention: q must lie in [0,1]");
    const double p = q[j] == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / q[j];
    factors.push_back(Factor{maps[j], p});
  }
  return make_datum(static_cast<int>(maps[0].cols()), std::move(factors));
}

}  // namespace blstab

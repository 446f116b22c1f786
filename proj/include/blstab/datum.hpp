#pragma once

#include <optional>
#include <vector>

#include "blstab/linalg.hpp"

namespace blstab {

// One factor of a Brascamp-Lieb datum: a surjection B_j : R^d -> R^{d_j}
// together with its Lebesgue exponent p_j in [1, inf].
struct Factor {
  Matrix map;  // d_j x d, full row rank
  double p = 2.0;
};

struct Datum {
  int dim = 0;  // ambient dimension d
  std::vector<Factor> factors;

  int size() const { return static_cast<int>(factors.size()); }
  int codim(int j) const { return static_cast<int>(factors[j].map.rows()); }
  // q_j = 1/p_j, with q_j = 0 for p_j = inf.
  double q(int j) const {
    const double p = factors[j].p;
    return std::isinf(p) ? 0.0 : 1.0 / p;
  }
  bool rank_one() const {
    for (const auto& f : factors)
      if (f.map.rows() != 1) return false;
    return true;
  }
};

// Validates surjectivity, dimension bounds, and exponent ranges; throws
// std::invalid_argument with the offending factor index.
Datum make_datum(int dim, std::vector<Factor> factors);

// Linear subspace of R^d given by orthonormal rows (k x d, 0 <= k <= d).
struct SubspaceBasis {
  Matrix rows;
  int dim() const { return static_cast<int>(rows.rows()); }
  int ambient_dim() const { return static_cast<int>(rows.cols()); }
  Matrix projection() const { return rows.transpose() * rows; }
};

SubspaceBasis make_subspace(Matrix rows, double tol = 1e-12);
// Orthonormalizes the row span of `span` into a subspace basis.
SubspaceBasis subspace_from_span(const Matrix& span, int ambient_dim);

enum class FeasibilityTag { InfiniteWithWitness, FeasibleOnCandidates, CertifiedFinite };

struct FeasibilityVerdict {
  FeasibilityTag tag = FeasibilityTag::FeasibleOnCandidates;
  double scaling_defect = 0.0;
  double worst_defect = 0.0;  // minimum subcriticality defect over candidates
  std::optional<SubspaceBasis> witness;
};

enum class SimplicityTag { Simple, NotSimpleWithWitness, SimpleOnCandidates };

struct SimplicityVerdict {
  SimplicityTag tag = SimplicityTag::SimpleOnCandidates;
  // Minimum defect over nonzero proper candidate subspaces (+inf when none).
  double worst_proper_defect = 0.0;
  std::optional<SubspaceBasis> witness;
};

struct CandidateOpts {
  int max_dim = -1;  // -1 means ambient dimension
  int random_per_dim = 200;
  uint64_t seed = 20260808;
  double defect_tol = 1e-9;
};

// d - sum_j q_j d_j; zero is necessary for a finite BL constant.
double scaling_defect(const Datum& datum);

// sum_j q_j dim(B_j(V)) - dim(V) with numerical ranks.
double subcriticality_defect(const Datum& datum, const SubspaceBasis& v);

// Spans of row subsets, kernel intersections of subfamilies, and seeded
// random subspaces, deduplicated by projection matrices. Includes {0}.
std::vector<SubspaceBasis> candidate_subspaces(const Datum& datum, int max_dim,
                                               const CandidateOpts& opts = {});

FeasibilityVerdict classify_finiteness(const Datum& datum, const CandidateOpts& opts = {});

SimplicityVerdict classify_simplicity(const Datum& datum, const CandidateOpts& opts = {});

struct GeometricCheck {
  bool geometric = false;
  double projection_residual = 0.0;  // max_j ||B_j B_j^T - I||
  double frame_residual = 0.0;       // ||sum_j q_j B_j^T B_j - I||
};

GeometricCheck is_geometric(const Datum& datum, double tol = 1e-10);

// Datum from the q-convention exponents (q_j = 1/p_j in [0,1]); q_j = 0 maps
// to p_j = inf. A nonnegative input f in the q-convention corresponds to
// f^{p_j} in the p-convention, with equal optimal constants.
Datum from_q_convention(const std::vector<Matrix>& maps, const std::vector<double>& q);

}  // namespace blstab

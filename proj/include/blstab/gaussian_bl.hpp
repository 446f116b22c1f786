#pragma once

#include <vector>

#include "blstab/datum.hpp"
#include "blstab/gaussian.hpp"

namespace blstab {

// Per-factor positive-definite exponent matrices A_j with optional offsets
// v_j and positive amplitudes c_j; factor j is c_j e^{-<A_j(y-v_j), y-v_j>}.
struct GaussianTuple {
  std::vector<Matrix> exponents;
  std::vector<Vector> offsets;     // empty means all zero
  std::vector<double> amplitudes;  // empty means all one

  size_t size() const { return exponents.size(); }
  bool has_offsets() const;
  Vector offset(size_t j) const;
  double amplitude(size_t j) const { return amplitudes.empty() ? 1.0 : amplitudes[j]; }

  static GaussianTuple identity(const Datum& datum);
  static GaussianTuple centered(std::vector<Matrix> exponents);
  static GaussianTuple scalars(const std::vector<double>& values);  // all d_j = 1
};

void validate_tuple(const Datum& datum, const GaussianTuple& tuple);

struct CenteredValueReport {
  Matrix m;                    // sum_j q_j B_j^T A_j B_j
  double value = 0.0;          // det(M)^{-1/2} prod_j det(A_j)^{q_j/2}
  bool normalized = false;     // det(M) = 1 within 1e-10
  double min_eigenvalue = 0.0;
  double scaling_defect = 0.0;
  bool pi_corrected = false;   // value includes pi^{defect/2} (nonzero defect)
};

// Throws std::invalid_argument when the result is not positive definite,
// which signals a common kernel and an infinite BL constant.
Matrix m_matrix(const Datum& datum, const GaussianTuple& tuple);

// q-convention ratio for centered inputs f_j = e^{-<A_j y, y>}. With nonzero
// scaling defect the report carries the pi^{defect/2} correction and a flag.
CenteredValueReport gaussian_bl_value(const Datum& datum, const GaussianTuple& tuple);

// p-convention ratio |int prod h_j o B_j| / prod ||h_j||_{p_j} for centered
// h_j = e^{-<C_j y, y>}; equals gaussian_bl_value at A_j = p_j C_j. Requires
// finite exponents and zero scaling defect.
double centered_blbp_p(const Datum& datum, const GaussianTuple& tuple);

// Scales the tuple so det(M) = 1; the value is unchanged.
GaussianTuple normalize_det(const Datum& datum, const GaussianTuple& tuple);

struct SquareCompletion {
  Vector center;         // xbar = M^{-1} sum_j q_j B_j^T A_j v_j
  double factor = 1.0;   // c in (0, 1]; 1 iff offsets are consistent
  GaussianTuple centered;
};

// Completing the square for offset tuples with unit amplitudes.
SquareCompletion complete_square(const Datum& datum, const GaussianTuple& tuple);

// Offsets (B_j xbar)_j realizable from a single base point. Returns an
// orthonormal basis of V inside the stacked offset space (dim sum_j d_j).
Matrix consistent_offset_subspace(const Datum& datum);

// c * gaussian_bl_value(centered): the q-convention ratio for offset
// Gaussian inputs. Amplitudes are normalized away (ratio invariance).
double offset_gaussian_ratio(const Datum& datum, const GaussianTuple& tuple);

// p-convention complex ratio for f_j = e^{-<C_j y,y>} e^{i <P_j y, y>}.
// The modulus is blbp(f); phases can only decrease it.
Complex modulated_blbp(const Datum& datum, const GaussianTuple& base,
                       const std::vector<Matrix>& phases);

}  // namespace blstab

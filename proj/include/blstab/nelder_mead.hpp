#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "blstab/linalg.hpp"

namespace blstab {

struct NelderMeadResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Standard Nelder-Mead downhill simplex minimization.
inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f,
                                    const Vector& x0, double scale, int max_iters,
                                    double tol) {
  const int n = static_cast<int>(x0.size());
  std::vector<Vector> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1](i) += scale;
  for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);

  auto order = [&] {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Vector> p2(n + 1);
    std::vector<double> v2(n + 1);
    for (int i = 0; i <= n; ++i) {
      p2[i] = pts[idx[i]];
      v2[i] = vals[idx[i]];
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };

  NelderMeadResult result;
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    order();
    if (std::abs(vals[n] - vals[0]) <= tol * (std::abs(vals[0]) + tol)) {
      result.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= n;

    const Vector reflected = centroid + (centroid - pts[n]);
    const double fr = f(reflected);
    if (fr < vals[0]) {
      const Vector expanded = centroid + 2.0 * (centroid - pts[n]);
      const double fe = f(expanded);
      if (fe < fr) {
        pts[n] = expanded;
        vals[n] = fe;
      } else {
        pts[n] = reflected;
        vals[n] = fr;
      }
      continue;
    }
    if (fr < vals[n - 1]) {
      pts[n] = reflected;
      vals[n] = fr;
      continue;
    }
    const Vector contracted = centroid + 0.5 * (pts[n] - centroid);
    const double fc = f(contracted);
    if (fc < vals[n]) {
      pts[n] = contracted;
      vals[n] = fc;
      continue;
    }
    for (int i = 1; i <= n; ++i) {  // shrink toward the best point
      pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
      vals[i] = f(pts[i]);
    }
  }
  order();
  result.x = pts[0];
  result.value = vals[0];
  result.iterations = iter;
  return result;
}

}  // namespace blstab

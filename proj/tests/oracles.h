// Independent reference computations shared by the unit and acceptance
// tests.

#ifndef IDG_TESTS_ORACLES_H
#define IDG_TESTS_ORACLES_H

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "idg/numerics.h"

namespace idg::oracle {

// Central differences of a vector-valued function, one column per input.
inline Matrix CentralJacobian(const std::function<Vector(const Vector&)>& fn,
                              const Vector& at, double step = 1e-5) {
  const Vector f0 = fn(at);
  Matrix jac(f0.size(), at.size());
  for (int j = 0; j < at.size(); ++j) {
    Vector plus = at, minus = at;
    plus[j] += step;
    minus[j] -= step;
    jac.col(j) = (fn(plus) - fn(minus)) / (2.0 * step);
  }
  return jac;
}

// max |a - b| / max(1, |a|, |b|) over entries; infinity on shape mismatch.
inline double MaxRelativeError(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return std::numeric_limits<double>::infinity();
  }
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      const double scale = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  }
  return worst;
}

inline double MaxStateError(const std::vector<Vector>& a,
                            const std::vector<Vector>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    worst = std::max(worst, (a[k] - b[k]).cwiseAbs().maxCoeff());
  }
  return worst;
}

// Finite-horizon LQ solution for a single player:
//   xdot = A x + B u,  cost = int x^T Q x + u^T R u dt + x(T)^T Qt x(T).
// Integrates -Sdot = A^T S + S A - S B R^-1 B^T S + Q from S(T) = Qt on a
// grid 20x finer than `steps`, then the closed loop u = -R^-1 B^T S x.
struct LqSolution {
  std::vector<Vector> states;  // on the coarse grid
  Vector psi0;                 // 2 S(0) x0
};

inline LqSolution SolveLq(const Matrix& a, const Matrix& b, const Matrix& q,
                          const Matrix& r, const Matrix& qt, const Vector& x0,
                          double horizon, int steps) {
  const int refine = 20;
  const int fine = steps * refine;
  const double hs = horizon / fine;
  const Matrix r_inv = r.inverse();
  auto sdot = [&](const Matrix& s) -> Matrix {
    return -(a.transpose() * s + s * a - s * b * r_inv * b.transpose() * s + q);
  };
  std::vector<Matrix> s(fine + 1);
  s[fine] = qt;
  for (int k = fine; k > 0; --k) {
    const Matrix& sk = s[k];
    const Matrix k1 = sdot(sk);
    const Matrix k2 = sdot(sk - 0.5 * hs * k1);
    const Matrix k3 = sdot(sk - 0.5 * hs * k2);
    const Matrix k4 = sdot(sk - hs * k3);
    s[k - 1] = sk - (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  auto closed = [&](int idx, const Vector& x) -> Vector {
    return (a - b * r_inv * b.transpose() * s[idx]) * x;
  };
  LqSolution out;
  out.psi0 = 2.0 * s[0] * x0;
  Vector x = x0;
  out.states.push_back(x);
  const double hx = 2.0 * hs;
  for (int k = 0; k < fine / 2; ++k) {
    const int i0 = 2 * k;
    const Vector k1 = closed(i0, x);
    const Vector k2 = closed(i0 + 1, x + 0.5 * hx * k1);
    const Vector k3 = closed(i0 + 1, x + 0.5 * hx * k2);
    const Vector k4 = closed(i0 + 2, x + hx * k3);
    x += (hx / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((k + 1) % (refine / 2) == 0) out.states.push_back(x);
  }
  return out;
}

// Minimum of x^T P x on pins and lower bounds by enumeration: every subset
// of bounds is tried as the active set, the free block is minimized by least
// squares, and the best feasible candidate wins.
inline double BruteForceQp(const Matrix& p,
                           const std::vector<std::pair<int, double>>& pins,
                           const std::vector<std::pair<int, double>>& bounds) {
  const int dim = static_cast<int>(p.rows());
  const int nb = static_cast<int>(bounds.size());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << nb); ++mask) {
    Vector x = Vector::Zero(dim);
    std::vector<bool> fixed(dim, false);
    for (const auto& [k, v] : pins) {
      fixed[k] = true;
      x[k] = v;
    }
    for (int j = 0; j < nb; ++j) {
      if (mask & (1 << j)) {
        fixed[bounds[j].first] = true;
        x[bounds[j].first] = bounds[j].second;
      }
    }
    std::vector<int> free_idx;
    for (int k = 0; k < dim; ++k) {
      if (!fixed[k]) free_idx.push_back(k);
    }
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      Matrix pff(nf, nf);
      Vector rhs = Vector::Zero(nf);
      for (int a = 0; a < nf; ++a) {
        for (int b = 0; b < nf; ++b) pff(a, b) = p(free_idx[a], free_idx[b]);
        for (int k = 0; k < dim; ++k) {
          if (fixed[k]) rhs[a] -= p(free_idx[a], k) * x[k];
        }
      }
      const Vector y = pff.completeOrthogonalDecomposition().solve(rhs);
      for (int a = 0; a < nf; ++a) x[free_idx[a]] = y[a];
    }
    bool feasible = true;
    for (const auto& [k, lower] : bounds) {
      feasible = feasible && x[k] >= lower - 1e-9;
    }
    if (feasible) best = std::min(best, x.dot(p * x));
  }
  return best;
}

// Largest violation of the KKT conditions of min x^T P x on pins and bounds.
inline double KktResidual(const Matrix& p, const Vector& x,
                          const std::vector<std::pair<int, double>>& pins,
                          const std::vector<std::pair<int, double>>& bounds) {
  const Vector grad = 2.0 * p * x;
  const int dim = static_cast<int>(p.rows());
  std::vector<bool> pinned(dim, false);
  std::vector<double> lower(dim, -std::numeric_limits<double>::infinity());
  for (const auto& [k, v] : pins) pinned[k] = true;
  for (const auto& [k, b] : bounds) lower[k] = std::max(lower[k], b);
  double worst = 0.0;
  for (int k = 0; k < dim; ++k) {
    if (pinned[k]) continue;
    if (std::isfinite(lower[k])) {
      worst = std::max(worst, lower[k] - x[k]);
      worst = std::max(worst, -grad[k]);
      worst = std::max(worst, std::abs(grad[k] * (x[k] - lower[k])));
    } else {
      worst = std::max(worst, std::abs(grad[k]));
    }
  }
  return worst;
}

}  // namespace idg::oracle

#endif  // IDG_TESTS_ORACLES_H

#include "idg/numerics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace idg {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonFiniteState: return "NonFiniteState";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kSingularMatrix: return "SingularMatrix";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNotApplicable: return "NotApplicable";
    case ErrorCode::kNoConvergedCandidate: return "NoConvergedCandidate";
    case ErrorCode::kUnboundedOrDegenerate: return "UnboundedOrDegenerate";
    case ErrorCode::kInfeasibleConstraints: return "InfeasibleConstraints";
    case ErrorCode::kInfeasibleStart: return "InfeasibleStart";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

TimeGrid::TimeGrid(double t0, double t_final, int steps)
    : t0_(t0), t_final_(t_final), steps_(steps) {
  if (!(t_final > t0) || !std::isfinite(t0) || !std::isfinite(t_final)) {
    throw Error(ErrorCode::kInvalidArgument,
                "time grid needs t_final > t0 (got " + std::to_string(t0) +
                    ", " + std::to_string(t_final) + ")");
  }
  if (steps < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "time grid needs at least 2 steps");
  }
}

double TimeGrid::time(int k) const {
  if (k == steps_) return t_final_;
  return t0_ + k * step_size();
}

bool AllFinite(const Vector& v) { return v.allFinite(); }
bool AllFinite(const Matrix& m) { return m.allFinite(); }

std::vector<Vector> IntegrateRk4(const VectorField& rhs, const Vector& initial,
                                 const TimeGrid& grid, Direction direction) {
  const int n = grid.steps();
  std::vector<Vector> out(grid.size());
  const bool forward = direction == Direction::kForward;
  const double h = forward ? grid.step_size() : -grid.step_size();

  int k = forward ? 0 : n;
  out[k] = initial;
  if (!AllFinite(initial)) {
    throw Error(ErrorCode::kNonFiniteState, "initial value is not finite");
  }
  Vector z = initial;
  for (int s = 0; s < n; ++s) {
    const double t = grid.time(k);
    const Vector k1 = rhs(t, z);
    const Vector k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1);
    const Vector k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2);
    const Vector k4 = rhs(t + h, z + h * k3);
    z += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
    k += forward ? 1 : -1;
    if (!AllFinite(z)) {
      throw Error(ErrorCode::kNonFiniteState,
                  "integration produced a non-finite state at t = " +
                      std::to_string(grid.time(k)));
    }
    out[k] = z;
  }
  return out;
}

SymmetricEigen SymEig(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::kNotSymmetric, "matrix is not square");
  }
  const Eigen::Index n = m.rows();
  const double scale = n > 0 ? m.cwiseAbs().maxCoeff() : 0.0;
  if (n > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() >
                   1e-9 * std::max(scale, 1e-300)) {
    throw Error(ErrorCode::kNotSymmetric, "matrix is not symmetric");
  }

  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);

  auto off_norm = [&a, n] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const double target = 1e-16 * std::max(a.norm(), 1e-300);

  for (int sweep = 0; sweep < 100 && off_norm() > target; ++sweep) {
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        // Rotation that annihilates a(p, q).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](Eigen::Index i, Eigen::Index j) {
                     return a(i, i) > a(j, j);
                   });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    out.eigenvectors.col(j) = v.col(order[j]);
  }
  return out;
}

Vector SolveLinear(const Matrix& a, const Vector& b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "SolveLinear needs a square matrix matching the rhs");
  }
  const Eigen::Index n = a.rows();
  Matrix lu = a;
  Vector x = b;
  const double scale = n > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  const double tiny = 1e-12 * scale;
  if (n > 0 && !(scale > 0.0)) {
    throw Error(ErrorCode::kSingularMatrix, "matrix is zero");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    lu.col(k).tail(n - k).cwiseAbs().maxCoeff(&piv);
    piv += k;
    if (!(std::abs(lu(piv, k)) > tiny)) {
      throw Error(ErrorCode::kSingularMatrix,
                  "pivot " + std::to_string(k) + " below threshold");
    }
    if (piv != k) {
      lu.row(k).swap(lu.row(piv));
      std::swap(x[k], x[piv]);
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double l = lu(i, k) / lu(k, k);
      if (l == 0.0) continue;
      lu.row(i).tail(n - k - 1) -= l * lu.row(k).tail(n - k - 1);
      x[i] -= l * x[k];
    }
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    double s = x[k];
    for (Eigen::Index j = k + 1; j < n; ++j) s -= lu(k, j) * x[j];
    x[k] = s / lu(k, k);
  }
  return x;
}

Vector InterpLinear(const TimeGrid& grid, const std::vector<Vector>& samples,
                    double t) {
  if (static_cast<int>(samples.size()) != grid.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample count does not match the grid");
  }
  const double slack = 1e-12 * (grid.t_final() - grid.t0());
  if (!(t >= grid.t0() - slack && t <= grid.t_final() + slack)) {
    throw Error(ErrorCode::kOutOfRange,
                "t = " + std::to_string(t) + " outside the grid");
  }
  const double h = grid.step_size();
  const double s = (t - grid.t0()) / h;
  int k = static_cast<int>(std::floor(s));
  k = std::clamp(k, 0, grid.steps() - 1);
  const double w = std::clamp(s - k, 0.0, 1.0);
  if (w == 0.0) return samples[k];
  if (w == 1.0) return samples[k + 1];
  return (1.0 - w) * samples[k] + w * samples[k + 1];
}

}  // namespace idg

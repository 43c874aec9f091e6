///////////////////////////////////////////////////////////////////////////////
//
// Small dense linear algebra and fixed-step integration kernels. Nothing in
// here knows about games; everything is a pure function of its inputs.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_NUMERICS_H
#define IDG_NUMERICS_H

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "idg/error.h"

namespace idg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Uniform grid t_k = t0 + k * h, k = 0..steps, h = (t_final - t0) / steps.
class TimeGrid {
 public:
  TimeGrid(double t0, double t_final, int steps);

  double t0() const { return t0_; }
  double t_final() const { return t_final_; }
  int steps() const { return steps_; }
  // Number of grid points (steps + 1).
  int size() const { return steps_ + 1; }
  double step_size() const { return (t_final_ - t0_) / steps_; }
  double time(int k) const;

  bool operator==(const TimeGrid& other) const = default;

 private:
  double t0_;
  double t_final_;
  int steps_;
};

enum class Direction { kForward, kBackward };

using VectorField = std::function<Vector(double, const Vector&)>;

// Classical RK4 on `grid`. The result is indexed by grid point: for kForward
// result[0] == initial, for kBackward result[grid.steps()] == initial and the
// integration runs from t_final down to t0 with a negated step. Throws
// kNonFiniteState as soon as a sample stops being finite.
std::vector<Vector> IntegrateRk4(const VectorField& rhs, const Vector& initial,
                                 const TimeGrid& grid, Direction direction);

// Allocation-free RK4 step for hot loops. `rhs(t, z, dz)` writes dz in place.
class Rk4Stepper {
 public:
  explicit Rk4Stepper(Eigen::Index dim)
      : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  template <typename Rhs>
  void Step(Rhs&& rhs, double t, double h, Vector& z) {
    rhs(t, z, k1_);
    tmp_.noalias() = z + 0.5 * h * k1_;
    rhs(t + 0.5 * h, tmp_, k2_);
    tmp_.noalias() = z + 0.5 * h * k2_;
    rhs(t + 0.5 * h, tmp_, k3_);
    tmp_.noalias() = z + h * k3_;
    rhs(t + h, tmp_, k4_);
    z += (h / 6.0) * (k1_ + 2.0 * (k2_ + k3_) + k4_);
  }

 private:
  Vector k1_, k2_, k3_, k4_, tmp_;
};

struct SymmetricEigen {
  // Sorted in descending order.
  Vector eigenvalues;
  // Orthonormal columns, column j belongs to eigenvalues[j].
  Matrix eigenvectors;
};

// Cyclic Jacobi eigendecomposition. Rejects input whose asymmetry exceeds
// 1e-9 relative to its largest entry (kNotSymmetric).
SymmetricEigen SymEig(const Matrix& m);

// Partial-pivot LU solve. Throws kSingularMatrix when a pivot falls below
// 1e-12 times the largest entry of `a`.
Vector SolveLinear(const Matrix& a, const Vector& b);

// Piecewise-linear interpolation of grid samples; exact at grid points.
Vector InterpLinear(const TimeGrid& grid, const std::vector<Vector>& samples,
                    double t);

bool AllFinite(const Vector& v);
bool AllFinite(const Matrix& m);

}  // namespace idg

#endif  // IDG_NUMERICS_H

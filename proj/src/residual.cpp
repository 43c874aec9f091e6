#include "idg/residual.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace idg {
namespace {

// Linearization of player i's basis and the dynamics along the ground truth
// at grid points (even indices) and interval midpoints (odd indices).
struct Coefficients {
  std::vector<Matrix> phi_x;  // M x n
  std::vector<Matrix> phi_u;  // M x m_i
  std::vector<Matrix> f_x;    // n x n
  std::vector<Matrix> f_u;    // n x m_i
};

Trajectory AlignToGame(const GameDefinition& game, const Trajectory& gt) {
  gt.Validate();
  if (gt.states[0].size() != game.state_dim() ||
      gt.controls[0].size() != game.total_control_dim()) {
    throw Error(ErrorCode::kInvalidArgument,
                "ground truth dimensions do not match the game");
  }
  return gt.grid == game.grid() ? gt : gt.Resampled(game.grid());
}

Coefficients Linearize(const GameDefinition& game, const Trajectory& gt,
                       int player) {
  const int steps = game.grid().steps();
  Coefficients c;
  const int count = 2 * steps + 1;
  c.phi_x.reserve(count);
  c.phi_u.reserve(count);
  c.f_x.reserve(count);
  c.f_u.reserve(count);
  for (int s = 0; s < count; ++s) {
    const int k = s / 2;
    Vector x, u;
    if (s % 2 == 0) {
      x = gt.states[k];
      u = gt.controls[k];
    } else {
      x = 0.5 * (gt.states[k] + gt.states[k + 1]);
      u = 0.5 * (gt.controls[k] + gt.controls[k + 1]);
    }
    c.phi_x.push_back(game.PhiStateJacobian(player, x, u));
    c.phi_u.push_back(game.PhiControlJacobian(player, x, u));
    c.f_x.push_back(game.dynamics().StateJacobian(x, u));
    c.f_u.push_back(game.dynamics().ControlJacobian(x, player));
  }
  return c;
}

// One RK4 step whose right-hand side is addressed by coefficient index.
template <typename Rhs>
void IndexedRk4Step(Rhs&& rhs, int s0, int direction, double h, Vector& z) {
  const Vector k1 = rhs(s0, z);
  const Vector k2 = rhs(s0 + direction, z + 0.5 * h * k1);
  const Vector k3 = rhs(s0 + direction, z + 0.5 * h * k2);
  const Vector k4 = rhs(s0 + 2 * direction, z + h * k3);
  z += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
}

void CheckPlayer(const GameDefinition& game, int player) {
  if (player < 0 || player >= game.num_players()) {
    throw Error(ErrorCode::kInvalidArgument,
                "player index " + std::to_string(player) + " out of range");
  }
}

// Columns d grad lambda_k(x) / d theta_k for the terminal basis entries;
// zero for running entries.
Matrix TerminalShift(const GameDefinition& game, int player, const Vector& x) {
  const int m_basis = game.basis_dim(player);
  Matrix l = Matrix::Zero(x.size(), m_basis);
  Vector unit = Vector::Zero(m_basis);
  Vector col(x.size());
  for (int k = 0; k < m_basis; ++k) {
    unit[k] = 1.0;
    col.setZero();
    game.AddTerminalCostGradient(player, unit, x, col);
    l.col(k) = col;
    unit[k] = 0.0;
  }
  return l;
}

}  // namespace

RiccatiAssembly RiccatiBackward(const GameDefinition& game,
                                const Trajectory& gt, int player) {
  CheckPlayer(game, player);
  const Trajectory aligned = AlignToGame(game, gt);
  const Coefficients c = Linearize(game, aligned, player);
  const int m_basis = game.basis_dim(player);
  const int n = game.state_dim();
  const int dim = m_basis + n;
  const TimeGrid& grid = game.grid();
  const int count = static_cast<int>(c.phi_x.size());

  // Shift L(t) = d grad h_theta(x_gt(t)) / d theta along the interpolated
  // ground truth; its derivative is constant on each interval.
  std::vector<Matrix> shift(count);
  for (int s = 0; s < count; ++s) {
    const int k = s / 2;
    const Vector x = s % 2 == 0 ? aligned.states[k]
                                : Vector(0.5 * (aligned.states[k] +
                                                aligned.states[k + 1]));
    shift[s] = TerminalShift(game, player, x);
  }
  std::vector<Matrix> shift_rate(grid.steps());
  for (int k = 0; k < grid.steps(); ++k) {
    shift_rate[k] = (shift[2 * k + 2] - shift[2 * k]) / grid.step_size();
  }

  // Shifted N and C^T without the interval-dependent rate term.
  std::vector<Matrix> big_n(count), big_ct(count);
  for (int s = 0; s < count; ++s) {
    Matrix nn(dim, n), ct(dim, c.phi_u[s].cols());
    nn << c.phi_x[s] - shift[s].transpose() * c.f_x[s], c.f_x[s];
    ct << c.phi_u[s] - shift[s].transpose() * c.f_u[s], c.f_u[s];
    big_n[s] = nn;
    big_ct[s] = ct;
  }
  auto rhs = [&](int s, int interval, const Matrix& p) -> Matrix {
    Matrix nn = big_n[s];
    nn.topRows(m_basis) -= shift_rate[interval].transpose();
    const Matrix k = p.rightCols(n) + nn;
    return k * k.transpose() - nn * nn.transpose() -
           big_ct[s] * big_ct[s].transpose();
  };
  auto unshift = [&](const Matrix& p, const Matrix& l) -> Matrix {
    Matrix t = Matrix::Identity(dim, dim);
    t.bottomLeftCorner(n, m_basis) = l;
    return t.transpose() * p * t;
  };

  RiccatiAssembly out;
  out.player = player;
  out.basis_dim = m_basis;
  out.state_dim = n;
  out.grid = grid;
  out.p.assign(grid.size(), Matrix());
  Matrix p = Matrix::Zero(dim, dim);
  out.p[grid.steps()] = p;
  const double h = -grid.step_size();
  for (int k = grid.steps(); k > 0; --k) {
    const int s0 = 2 * k;
    const int interval = k - 1;
    const Matrix k1 = rhs(s0, interval, p);
    const Matrix k2 = rhs(s0 - 1, interval, p + 0.5 * h * k1);
    const Matrix k3 = rhs(s0 - 1, interval, p + 0.5 * h * k2);
    const Matrix k4 = rhs(s0 - 2, interval, p + h * k3);
    p += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
    p = 0.5 * (p + p.transpose()).eval();
    if (!p.allFinite()) {
      throw Error(ErrorCode::kNonFiniteState,
                  "Riccati sweep blew up at t = " +
                      std::to_string(grid.time(k - 1)));
    }
    Matrix folded = unshift(p, shift[2 * (k - 1)]);
    out.p[k - 1] = 0.5 * (folded + folded.transpose());
  }
  // Discretization error can leave eigenvalues slightly below zero; P(0) is
  // projected onto the PSD cone and kept as P = R^T R.
  const SymmetricEigen eig = SymEig(p);
  out.shifted_factor = Matrix::Zero(dim, dim);
  for (int j = 0; j < dim; ++j) {
    out.min_eigenvalue = j == 0 ? eig.eigenvalues[j]
                                : std::min(out.min_eigenvalue,
                                           eig.eigenvalues[j]);
    if (eig.eigenvalues[j] > 0.0) {
      out.shifted_factor.row(j) =
          std::sqrt(eig.eigenvalues[j]) * eig.eigenvectors.col(j).transpose();
    }
  }
  out.shifted_p0 = out.shifted_factor.transpose() * out.shifted_factor;
  out.shift0 = shift[0];
  const Matrix folded = unshift(out.shifted_p0, out.shift0);
  out.p[0] = 0.5 * (folded + folded.transpose());
  return out;
}

Vector RiccatiAssembly::ToShifted(const Vector& alpha) const {
  Vector out = alpha;
  out.tail(state_dim) += shift0 * alpha.head(basis_dim);
  return out;
}

Vector RiccatiAssembly::FromShifted(const Vector& shifted) const {
  Vector out = shifted;
  out.tail(state_dim) -= shift0 * shifted.head(basis_dim);
  return out;
}

double QuadraticResidual(const RiccatiAssembly& assembly, const Vector& alpha) {
  if (alpha.size() != assembly.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "alpha has the wrong dimension for this assembly");
  }
  return (assembly.shifted_factor * assembly.ToShifted(alpha)).squaredNorm();
}

double ResidualDirectPlayer(const GameDefinition& game, const Trajectory& gt,
                            int player, const Vector& theta_i,
                            const Vector& psi0_i) {
  CheckPlayer(game, player);
  const int n = game.state_dim();
  if (theta_i.size() != game.basis_dim(player) || psi0_i.size() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "theta_i / psi0_i have the wrong dimension");
  }
  const Trajectory aligned = AlignToGame(game, gt);
  const Coefficients c = Linearize(game, aligned, player);
  const TimeGrid& grid = game.grid();
  const double h = grid.step_size();

  // State w = [psi; lambda; cost]. `forced` switches the theta terms on.
  auto make_rhs = [&](bool forced) {
    return [&, forced](int s, const Vector& w) -> Vector {
      const auto psi = w.head(n);
      const auto lambda = w.segment(n, n);
      Vector a = c.f_x[s].transpose() * psi;
      Vector r = c.f_u[s].transpose() * psi;
      if (forced) {
        a += c.phi_x[s].transpose() * theta_i;
        r += c.phi_u[s].transpose() * theta_i;
      }
      Vector dw(2 * n + 1);
      dw.head(n) = -a - 0.5 * lambda;
      dw.segment(n, n) = c.f_x[s] * lambda - 2.0 * c.f_u[s] * r;
      dw[2 * n] = r.squaredNorm() + 0.25 * lambda.squaredNorm();
      return dw;
    };
  };
  auto integrate = [&](bool forced, const Vector& w0) {
    const auto rhs = make_rhs(forced);
    Vector w = w0;
    for (int k = 0; k < grid.steps(); ++k) {
      IndexedRk4Step(rhs, 2 * k, 1, h, w);
      if (!w.allFinite()) {
        throw Error(ErrorCode::kNonFiniteState,
                    "residual boundary-value integration diverged at t = " +
                        std::to_string(grid.time(k + 1)));
      }
    }
    return w;
  };

  // lambda(T) is affine in lambda(0): particular part plus n unit responses.
  Vector w0 = Vector::Zero(2 * n + 1);
  w0.head(n) = psi0_i;
  const Vector particular = integrate(true, w0);
  Matrix response(n, n);
  for (int j = 0; j < n; ++j) {
    Vector e = Vector::Zero(2 * n + 1);
    e[n + j] = 1.0;
    response.col(j) = integrate(false, e).segment(n, n);
  }
  const Vector lambda0 = SolveLinear(response, -particular.segment(n, n));
  w0.segment(n, n) = lambda0;
  return integrate(true, w0)[2 * n];
}

double ResidualDirect(const GameDefinition& game, const Trajectory& gt,
                      const ParameterVector& theta, const Vector& psi0) {
  game.CheckParameters(theta);
  const int n = game.state_dim();
  if (psi0.size() != n * game.num_players()) {
    throw Error(ErrorCode::kInvalidArgument,
                "stacked psi0 has the wrong dimension");
  }
  double total = 0.0;
  for (int i = 0; i < game.num_players(); ++i) {
    total += ResidualDirectPlayer(game, gt, i, theta.player(i),
                                  psi0.segment(i * n, n));
  }
  return total;
}

ConstraintSpec ConstraintSpec::PinFirstWeights(int num_players) {
  ConstraintSpec spec;
  for (int i = 0; i < num_players; ++i) spec.pins.push_back({i, 0, 1.0});
  return spec;
}

ConstraintSpec ConstraintSpec::WithLowerBounds(const std::vector<int>& indices,
                                               double lower,
                                               int num_players) const {
  ConstraintSpec out = *this;
  for (int i = 0; i < num_players; ++i) {
    for (int k : indices) out.bounds.push_back({i, k, lower});
  }
  return out;
}

QpResult SolveConstrainedQp(const Matrix& p,
                            const std::vector<std::pair<int, double>>& pins,
                            const std::vector<std::pair<int, double>>& bounds) {
  const int dim = static_cast<int>(p.rows());
  if (p.cols() != dim) {
    throw Error(ErrorCode::kInvalidArgument, "QP matrix must be square");
  }
  const double scale = dim > 0 ? p.cwiseAbs().maxCoeff() : 0.0;
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + scale)) {
    throw Error(ErrorCode::kUnboundedOrDegenerate, "QP matrix not symmetric");
  }
  const Matrix sym = 0.5 * (p + p.transpose());
  if (dim > 0 && SymEig(sym).eigenvalues[dim - 1] < -1e-7 * (1.0 + scale)) {
    throw Error(ErrorCode::kUnboundedOrDegenerate,
                "QP matrix is not positive semidefinite");
  }

  // 0 = free, 1 = pinned, 2 = bounded.
  std::vector<int> kind(dim, 0);
  Vector x = Vector::Zero(dim);
  Vector lower = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
  auto check_index = [dim](int k) {
    if (k < 0 || k >= dim) {
      throw Error(ErrorCode::kInvalidArgument,
                  "constraint index " + std::to_string(k) + " out of range");
    }
  };
  for (const auto& [k, v] : pins) {
    check_index(k);
    if (kind[k] == 1 && x[k] != v) {
      throw Error(ErrorCode::kInfeasibleConstraints,
                  "index " + std::to_string(k) + " pinned to two values");
    }
    kind[k] = 1;
    x[k] = v;
  }
  for (const auto& [k, b] : bounds) {
    check_index(k);
    lower[k] = std::max(lower[k], b);
  }
  bool trivial = true;
  for (int k = 0; k < dim; ++k) {
    if (kind[k] == 1) {
      if (x[k] < lower[k]) {
        throw Error(ErrorCode::kInfeasibleConstraints,
                    "pin on index " + std::to_string(k) +
                        " violates its lower bound");
      }
      trivial = trivial && x[k] == 0.0;
    } else if (std::isfinite(lower[k])) {
      kind[k] = 2;
      trivial = trivial && lower[k] <= 0.0;
    }
  }
  if (trivial) {
    throw Error(ErrorCode::kInvalidArgument,
                "constraints admit the trivial solution x = 0");
  }

  // Start with every bound active.
  std::vector<bool> active(dim, false);
  int bound_count = 0;
  for (int k = 0; k < dim; ++k) {
    if (kind[k] == 2) {
      active[k] = true;
      x[k] = lower[k];
      ++bound_count;
    }
  }
  const int max_iterations = 2 * bound_count + 2;
  const double noise = 1e-12 * dim * (1.0 + scale);
  // A bound released with a multiplier that is zero up to rounding can be
  // re-blocked by a zero-length step; such bounds are not released again.
  std::vector<bool> pinned_bound(dim, false);
  int released = -1;
  QpResult out;
  for (int iter = 1; iter <= max_iterations; ++iter) {
    std::vector<int> free_idx, fixed_idx;
    for (int k = 0; k < dim; ++k) {
      (kind[k] == 1 || active[k] ? fixed_idx : free_idx).push_back(k);
    }
    Vector target = x;
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      Matrix pff(nf, nf);
      Vector rhs = Vector::Zero(nf);
      for (int a = 0; a < nf; ++a) {
        for (int b = 0; b < nf; ++b) pff(a, b) = sym(free_idx[a], free_idx[b]);
        for (int k : fixed_idx) rhs[a] -= sym(free_idx[a], k) * x[k];
      }
      Vector y;
      try {
        y = SolveLinear(pff, rhs);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kSingularMatrix) throw;
        const double shift =
            1e-10 * std::max(pff.cwiseAbs().maxCoeff(), 1.0);
        try {
          y = SolveLinear(pff + shift * Matrix::Identity(nf, nf), rhs);
        } catch (const Error&) {
          throw Error(ErrorCode::kUnboundedOrDegenerate,
                      "reduced QP system singular after regularization");
        }
      }
      for (int a = 0; a < nf; ++a) target[free_idx[a]] = y[a];
    }
    const Vector step = target - x;
    out.iterations = iter;
    if (step.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) {
      // Stationary on the working set: release the most negative multiplier.
      const Vector grad = 2.0 * sym * x;
      const double tol = noise * (1.0 + x.cwiseAbs().maxCoeff());
      int release = -1;
      double most_negative = -tol;
      for (int k = 0; k < dim; ++k) {
        if (kind[k] == 2 && active[k] && !pinned_bound[k] &&
            grad[k] < most_negative) {
          most_negative = grad[k];
          release = k;
        }
      }
      if (release < 0) {
        out.x = x;
        out.objective = x.dot(sym * x);
        return out;
      }
      active[release] = false;
      released = release;
      continue;
    }
    double t = 1.0;
    int blocking = -1;
    for (int k = 0; k < dim; ++k) {
      if (kind[k] == 2 && !active[k] && step[k] < 0.0) {
        const double tk = (lower[k] - x[k]) / step[k];
        if (tk < t) {
          t = tk;
          blocking = k;
        }
      }
    }
    x += t * step;
    if (blocking >= 0) {
      x[blocking] = lower[blocking];
      active[blocking] = true;
      if (blocking == released && t <= 1e-12) pinned_bound[blocking] = true;
    }
    released = -1;
  }
  throw Error(ErrorCode::kUnboundedOrDegenerate,
              "active set did not settle within " +
                  std::to_string(max_iterations) + " iterations");
}

ResidualSolution SolveResidualQp(const std::vector<RiccatiAssembly>& assemblies,
                                 const ConstraintSpec& constraints) {
  const int players = static_cast<int>(assemblies.size());
  for (const auto& pin : constraints.pins) {
    if (pin.player < 0 || pin.player >= players) {
      throw Error(ErrorCode::kInvalidArgument, "pin refers to unknown player");
    }
  }
  for (const auto& bound : constraints.bounds) {
    if (bound.player < 0 || bound.player >= players) {
      throw Error(ErrorCode::kInvalidArgument,
                  "bound refers to unknown player");
    }
  }
  ResidualSolution out;
  std::vector<Vector> thetas;
  std::vector<Vector> psis;
  for (int i = 0; i < players; ++i) {
    const RiccatiAssembly& a = assemblies[i];
    std::vector<std::pair<int, double>> pins, bounds;
    auto check = [&a](int index) {
      if (index < 0 || index >= a.basis_dim) {
        throw Error(ErrorCode::kInvalidArgument,
                    "constraint index " + std::to_string(index) +
                        " is not a basis weight");
      }
    };
    for (const auto& pin : constraints.pins) {
      if (pin.player != i) continue;
      check(pin.index);
      pins.emplace_back(pin.index, pin.value);
    }
    for (const auto& bound : constraints.bounds) {
      if (bound.player != i) continue;
      check(bound.index);
      bounds.emplace_back(bound.index, bound.lower);
    }
    // Weights are unchanged by the shift, so the constraints carry over.
    const QpResult qp = SolveConstrainedQp(a.shifted_p0, pins, bounds);
    PlayerResidual pr;
    pr.alpha = a.FromShifted(qp.x);
    pr.delta = QuadraticResidual(a, pr.alpha);
    pr.iterations = qp.iterations;
    thetas.push_back(pr.alpha.head(a.basis_dim));
    psis.push_back(pr.alpha.tail(a.state_dim));
    out.delta += pr.delta;
    out.players.push_back(std::move(pr));
  }
  out.theta = ParameterVector(thetas);
  int total = 0;
  for (const Vector& p : psis) total += static_cast<int>(p.size());
  out.psi0.resize(total);
  int offset = 0;
  for (const Vector& p : psis) {
    out.psi0.segment(offset, p.size()) = p;
    offset += static_cast<int>(p.size());
  }
  return out;
}

ResidualSolution IdentifyResidual(const GameDefinition& game,
                                  const Trajectory& gt,
                                  const ConstraintSpec& constraints) {
  std::vector<RiccatiAssembly> assemblies;
  for (int i = 0; i < game.num_players(); ++i) {
    assemblies.push_back(RiccatiBackward(game, gt, i));
  }
  return SolveResidualQp(assemblies, constraints);
}

IdentifiabilityDiagnostics DiagnoseIdentifiability(const Matrix& p0,
                                                   int basis_dim) {
  const int dim = static_cast<int>(p0.rows());
  if (p0.cols() != dim || basis_dim < 1 || basis_dim > dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "diagnostics need a square P(0) and 1 <= M <= size");
  }
  const int d = dim - 1;
  const int n = dim - basis_dim;
  IdentifiabilityDiagnostics out;
  out.p_bar = p0.bottomRightCorner(d, d);
  out.p_bar = 0.5 * (out.p_bar + out.p_bar.transpose()).eval();
  out.p_bar_col = p0.col(0).tail(d);

  const SymmetricEigen eig = SymEig(out.p_bar);
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&eig](int a, int b) {
    return std::abs(eig.eigenvalues[a]) > std::abs(eig.eigenvalues[b]);
  });
  Matrix u(d, d);
  out.singular_values.resize(d);
  for (int j = 0; j < d; ++j) {
    out.singular_values[j] = std::abs(eig.eigenvalues[order[j]]);
    u.col(j) = eig.eigenvectors.col(order[j]);
  }
  const double sigma_max = d > 0 ? out.singular_values[0] : 0.0;
  const double threshold = 1e-6 * sigma_max;
  out.rank = 0;
  if (sigma_max > 0.0) {
    for (int j = 0; j < d; ++j) {
      if (out.singular_values[j] > threshold) ++out.rank;
    }
  }
  out.p_bar_pinv = Matrix::Zero(d, d);
  for (int j = 0; j < out.rank; ++j) {
    const double lambda = eig.eigenvalues[order[j]];
    out.p_bar_pinv += (1.0 / lambda) * u.col(j) * u.col(j).transpose();
  }

  const int r = out.rank;
  const int top = basis_dim - 1;
  out.u11 = u.topLeftCorner(top, r);
  out.u12 = u.topRightCorner(top, d - r);
  out.u21 = u.bottomLeftCorner(n, r);
  out.u22 = u.bottomRightCorner(n, d - r);
  out.full_rank = r == d;
  out.block_zero =
      out.u12.size() == 0 || out.u12.cwiseAbs().maxCoeff() <= 1e-6;
  return out;
}

IdentifiabilityDiagnostics DiagnoseIdentifiability(
    const RiccatiAssembly& assembly) {
  return DiagnoseIdentifiability(assembly.p0(), assembly.basis_dim);
}

double RecoveredScale(const Vector& theta_true, const Vector& theta_hat) {
  if (theta_true.size() == 0 || theta_true[0] == 0.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "scale needs a nonzero first true weight");
  }
  return theta_hat[0] / theta_true[0];
}

double CosineSimilarity(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace idg

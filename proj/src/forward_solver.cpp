#include "idg/forward_solver.h"

#include <cmath>
#include <limits>

#include "idg/metrics.h"

namespace idg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kContinuationFirstStep = 0.125;
constexpr double kContinuationMinStep = 1.0 / 1024.0;
constexpr int kContinuationMaxSolves = 64;
constexpr int kContinuationMaxIterations = 400;

bool HasInteractionTerms(const GameDefinition& game) {
  for (const PlayerBasis& b : game.basis()) {
    for (const RunningTerm& term : b.running) {
      if (std::holds_alternative<InverseDistance>(term)) return true;
    }
  }
  return false;
}

// Augmented state z = [x; psi_1; ...; psi_N] with unfolded costates.
class ShootingProblem {
 public:
  ShootingProblem(const GameDefinition& game, const ParameterVector& theta)
      : game_(game),
        theta_(theta),
        n_(game.state_dim()),
        players_(game.num_players()),
        stepper_(n_ * (1 + players_)),
        z_(n_ * (1 + players_)),
        u_(game.total_control_dim()),
        f_(n_),
        w_(n_),
        tmp_n_(n_),
        psi_(n_) {
    game.CheckParameters(theta);
    for (int i = 0; i < players_; ++i) {
      const int m = game.control_dim(i);
      const Matrix hess = game.WeightedControlHessian(i, theta.player(i));
      Eigen::LLT<Matrix> llt(hess);
      if (llt.info() != Eigen::Success || !hess.allFinite()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "control weights of player " + std::to_string(i) +
                        " must be strictly positive");
      }
      r_inv_.push_back(llt.solve(Matrix::Identity(m, m)));
      Vector c = Vector::Zero(m);
      game.AddRunningControlGradient(i, theta.player(i),
                                     Vector::Zero(game.total_control_dim()), c);
      control_bias_.push_back(c);
      g_.emplace_back(m);
    }
  }

  int unknowns() const { return n_ * players_; }

  // Stacked grad h_i(x).
  Vector TerminalGradients(const Vector& x) const {
    Vector out = Vector::Zero(unknowns());
    for (int i = 0; i < players_; ++i) {
      Vector gi = Vector::Zero(n_);
      game_.AddTerminalCostGradient(i, theta_.player(i), x, gi);
      out.segment(i * n_, n_) = gi;
    }
    return out;
  }

  // Equilibrium controls at augmented state z, written to u.
  void Controls(const Vector& z, Vector& u) {
    x_ = z.head(n_);
    for (int i = 0; i < players_; ++i) {
      psi_ = z.segment(n_ * (1 + i), n_);
      game_.dynamics().InputMapTransposeTimes(x_, i, psi_, g_[i]);
      g_[i] += control_bias_[i];
      u.segment(game_.control_offset(i), game_.control_dim(i)).noalias() =
          -r_inv_[i] * g_[i];
    }
  }

  void Rhs(const Vector& z, Vector& dz) {
    Controls(z, u_);
    game_.dynamics().EvaluateInto(x_, u_, f_);
    dz.head(n_) = f_;
    for (int i = 0; i < players_; ++i) {
      w_.setZero();
      game_.AddRunningStateGradient(i, theta_.player(i), x_, w_);
      psi_ = z.segment(n_ * (1 + i), n_);
      game_.dynamics().StateJacobianTransposeTimes(x_, u_, psi_, tmp_n_);
      dz.segment(n_ * (1 + i), n_) = -(w_ + tmp_n_);
    }
  }

  // Integrates from unfolded psi(0) = p. Returns false when the iterate
  // diverges or leaves the domain of the basis. On success `residual` holds
  // psi(T) - grad h(x(T)) and `scale` the max-norm of grad h(x(T)).
  bool Propagate(const Vector& p, Vector* residual, double* scale,
                 std::vector<Vector>* samples, double bound) {
    const TimeGrid& grid = game_.grid();
    const double h = grid.step_size();
    z_.head(n_) = game_.x0();
    z_.tail(unknowns()) = p;
    if (samples != nullptr) {
      samples->assign(grid.size(), Vector());
      (*samples)[0] = z_;
    }
    try {
      for (int k = 0; k < grid.steps(); ++k) {
        stepper_.Step([this](double, const Vector& z,
                             Vector& dz) { Rhs(z, dz); },
                      grid.time(k), h, z_);
        if (!z_.allFinite() || z_.head(n_).norm() > bound) return false;
        if (samples != nullptr) (*samples)[k + 1] = z_;
      }
      const Vector grad_h = TerminalGradients(z_.head(n_));
      *residual = z_.tail(unknowns()) - grad_h;
      *scale = grad_h.size() > 0 ? grad_h.cwiseAbs().maxCoeff() : 0.0;
    } catch (const Error&) {
      return false;
    }
    return residual->allFinite();
  }

 private:
  const GameDefinition& game_;
  const ParameterVector& theta_;
  int n_;
  int players_;
  std::vector<Matrix> r_inv_;
  std::vector<Vector> control_bias_;
  std::vector<Vector> g_;
  Rk4Stepper stepper_;
  Vector z_, u_, f_, w_, tmp_n_, psi_, x_;
};

Vector SolveNewtonStep(const Matrix& jac, const Vector& r) {
  try {
    return SolveLinear(jac, -r);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSingularMatrix) throw;
  }
  // Regularized least squares on a singular Jacobian.
  const Matrix jtj = jac.transpose() * jac;
  const double mu = 1e-10 * std::max(jtj.trace(), 1e-300);
  return (jtj + mu * Matrix::Identity(jtj.rows(), jtj.cols()))
      .ldlt()
      .solve(-jac.transpose() * r);
}

OlneSolution BuildSolution(const GameDefinition& game,
                           ShootingProblem& problem,
                           const std::vector<Vector>& samples) {
  const int n = game.state_dim();
  const int players = game.num_players();
  const TimeGrid& grid = game.grid();
  OlneSolution out;
  out.trajectory.grid = grid;
  out.costates.psi.assign(players, std::vector<Vector>(grid.size()));
  Vector u(game.total_control_dim());
  for (int k = 0; k < grid.size(); ++k) {
    const Vector& z = samples[k];
    problem.Controls(z, u);
    const Vector x = z.head(n);
    const Vector grad_h = problem.TerminalGradients(x);
    out.trajectory.states.push_back(x);
    out.trajectory.controls.push_back(u);
    for (int i = 0; i < players; ++i) {
      out.costates.psi[i][k] =
          z.segment(n * (1 + i), n) - grad_h.segment(i * n, n);
    }
  }
  out.initial_costate.resize(n * players);
  for (int i = 0; i < players; ++i) {
    out.initial_costate.segment(i * n, n) = out.costates.psi[i][0];
  }
  return out;
}

}  // namespace

OlneSolution Shoot(const GameDefinition& game, const ParameterVector& theta,
                   const CostateGuess& guess, const ShootingOptions& options) {
  ShootingProblem problem(game, theta);
  const int dim = problem.unknowns();
  if (guess.psi0.size() != dim) {
    throw Error(ErrorCode::kInvalidArgument,
                "costate guess has " + std::to_string(guess.psi0.size()) +
                    " entries, expected " + std::to_string(dim));
  }
  const double bound = options.divergence_bound;
  Vector p = guess.psi0 + problem.TerminalGradients(game.x0());

  Vector r(dim), trial_r(dim), col(dim);
  double scale = 0.0, trial_scale = 0.0;
  OlneSolution failed;
  failed.start_label = guess.label;
  failed.shooting_residual = kInf;
  failed.initial_costate = guess.psi0;
  if (!problem.Propagate(p, &r, &scale, nullptr, bound)) return failed;

  bool converged = false;
  int iter = 0;
  for (;; ++iter) {
    if (r.cwiseAbs().maxCoeff() <= options.tolerance * (1.0 + scale)) {
      converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;

    Matrix jac(dim, dim);
    bool jac_ok = true;
    for (int j = 0; j < dim && jac_ok; ++j) {
      const double step = options.fd_step * std::max(1.0, std::abs(p[j]));
      Vector q = p;
      q[j] += step;
      double s = 0.0;
      jac_ok = problem.Propagate(q, &col, &s, nullptr, bound);
      jac.col(j) = (col - r) / step;
    }
    if (!jac_ok || !jac.allFinite()) break;
    const Vector d = SolveNewtonStep(jac, r);
    if (!d.allFinite()) break;

    const double merit = r.norm();
    bool accepted = false;
    for (double t = 1.0; t >= options.min_step; t *= 0.5) {
      const Vector q = p + t * d;
      if (problem.Propagate(q, &trial_r, &trial_scale, nullptr, bound) &&
          trial_r.norm() <= (1.0 - options.armijo * t) * merit) {
        p = q;
        r = trial_r;
        scale = trial_scale;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  std::vector<Vector> samples;
  if (!problem.Propagate(p, &r, &scale, &samples, bound)) return failed;
  OlneSolution out = BuildSolution(game, problem, samples);
  out.shooting_residual = r.cwiseAbs().maxCoeff();
  out.tolerance = options.tolerance * (1.0 + scale);
  out.converged = converged;
  out.iterations = iter;
  out.start_label = guess.label;
  return out;
}

std::vector<OlneSolution> SolveOlne(const GameDefinition& game,
                                    const ParameterVector& theta,
                                    const std::vector<CostateGuess>& guesses,
                                    const ShootingOptions& options) {
  std::vector<OlneSolution> out;
  bool any = false;
  for (const CostateGuess& guess : guesses) {
    out.push_back(Shoot(game, theta, guess, options));
    any = any || out.back().converged;
  }
  if (!any) {
    throw Error(ErrorCode::kNoConvergence,
                "no shooting start converged (" +
                    std::to_string(guesses.size()) + " tried)");
  }
  return out;
}

CostateGuess ZeroGuess(const GameDefinition& game) {
  return {"zero", Vector::Zero(game.state_dim() * game.num_players())};
}

CostateGuess ConstantStateGuess(const GameDefinition& game,
                                const ParameterVector& theta) {
  game.CheckParameters(theta);
  const int n = game.state_dim();
  const Vector& x0 = game.x0();
  const Vector u0 = Vector::Zero(game.total_control_dim());
  const Matrix fx = game.dynamics().StateJacobian(x0, u0);
  CostateGuess out{"constant_state", Vector(n * game.num_players())};
  for (int i = 0; i < game.num_players(); ++i) {
    Vector forcing = Vector::Zero(n);
    game.AddRunningStateGradient(i, theta.player(i), x0, forcing);
    const Vector grad_h = game.TerminalCostGradient(i, theta.player(i), x0);
    const auto psi = IntegrateRk4(
        [&](double, const Vector& p) {
          return Vector(-(forcing + fx.transpose() * p));
        },
        grad_h, game.grid(), Direction::kBackward);
    out.psi0.segment(i * n, n) = psi.front() - grad_h;
  }
  return out;
}

CostateGuess MirroredGuess(const GameDefinition& game,
                           const ParameterVector& theta,
                           const OlneSolution& base) {
  if (game.family() != "collision") {
    throw Error(ErrorCode::kNotApplicable,
                "mirrored guesses exist only for the collision game");
  }
  if (!base.converged) {
    throw Error(ErrorCode::kInvalidArgument,
                "mirrored guess needs a converged base solution");
  }
  const int n = game.state_dim();
  const Vector& x0 = game.x0();
  const Vector targets = CollisionTargets(game);

  std::vector<Eigen::Matrix2d> reflect(2);
  for (int k = 0; k < 2; ++k) {
    Eigen::Vector2d d = targets.segment<2>(2 * k) - x0.segment<2>(2 * k);
    if (d.norm() < kDistanceFloor) {
      throw Error(ErrorCode::kDegenerateGeometry,
                  "robot " + std::to_string(k) + " starts at its target");
    }
    d.normalize();
    reflect[k] = 2.0 * d * d.transpose() - Eigen::Matrix2d::Identity();
  }

  const Vector u0 = base.trajectory.controls.front();
  CostateGuess out{"mirrored", Vector(n * 2)};
  for (int i = 0; i < 2; ++i) {
    const Vector grad_h = game.TerminalCostGradient(i, theta.player(i), x0);
    Vector psi = base.initial_costate.segment(i * n, n) + grad_h;
    for (int k = 0; k < 2; ++k) {
      psi.segment<2>(2 * k) = reflect[k] * psi.segment<2>(2 * k);
    }
    // Own block from stationarity with the mirrored initial velocity.
    const Vector mirrored_u = reflect[i] * u0.segment<2>(2 * i);
    Vector bias = Vector::Zero(2);
    game.AddRunningControlGradient(i, theta.player(i),
                                   Vector::Zero(game.total_control_dim()),
                                   bias);
    psi.segment<2>(2 * i) =
        -(game.WeightedControlHessian(i, theta.player(i)) * mirrored_u + bias);
    out.psi0.segment(i * n, n) = psi - grad_h;
  }
  if (!out.psi0.allFinite()) {
    throw Error(ErrorCode::kNonFiniteState, "mirrored guess is not finite");
  }
  return out;
}

OlneSolution ContinuationSolve(const GameDefinition& game,
                               const ParameterVector& theta,
                               const ShootingOptions& options) {
  game.CheckParameters(theta);
  // Basis rows of the interaction terms, per player.
  std::vector<std::vector<int>> rows(game.num_players());
  bool any = false;
  for (int i = 0; i < game.num_players(); ++i) {
    const auto& running = game.basis(i).running;
    for (size_t k = 0; k < running.size(); ++k) {
      if (std::holds_alternative<InverseDistance>(running[k])) {
        rows[i].push_back(static_cast<int>(k));
        any = true;
      }
    }
  }
  if (!any) {
    throw Error(ErrorCode::kNotApplicable,
                "continuation needs inverse-distance basis terms");
  }
  auto scaled = [&](double lambda) {
    ParameterVector out = theta;
    for (int i = 0; i < game.num_players(); ++i) {
      for (int k : rows[i]) out.player(i)[k] *= lambda;
    }
    return out;
  };

  int total_iterations = 0;
  OlneSolution current = Shoot(game, scaled(0.0), ZeroGuess(game), options);
  total_iterations += current.iterations;
  if (!current.converged) {
    current = Shoot(game, scaled(0.0), ConstantStateGuess(game, scaled(0.0)),
                    options);
    total_iterations += current.iterations;
  }
  double lambda = 0.0;
  double step = kContinuationFirstStep;
  for (int solves = 0; current.converged && lambda < 1.0 &&
                       step >= kContinuationMinStep &&
                       solves < kContinuationMaxSolves &&
                       total_iterations < kContinuationMaxIterations;
       ++solves) {
    const double next = std::min(1.0, lambda + step);
    OlneSolution trial = Shoot(game, scaled(next),
                               {"continuation", current.initial_costate},
                               options);
    total_iterations += trial.iterations;
    if (trial.converged) {
      current = std::move(trial);
      lambda = next;
      step *= 2.0;
    } else {
      step *= 0.5;
    }
  }
  current.converged = current.converged && lambda == 1.0;
  current.iterations = total_iterations;
  current.start_label = "continuation";
  return current;
}

std::vector<OlneSolution> SolveOlneMultiStart(
    const GameDefinition& game, const ParameterVector& theta,
    const std::vector<CostateGuess>& extra, const ShootingOptions& options) {
  std::vector<CostateGuess> guesses = extra;
  guesses.push_back(ZeroGuess(game));
  guesses.push_back(ConstantStateGuess(game, theta));
  std::vector<OlneSolution> out;
  const OlneSolution* first = nullptr;
  for (const CostateGuess& guess : guesses) {
    out.push_back(Shoot(game, theta, guess, options));
  }
  auto first_converged = [&out]() -> const OlneSolution* {
    for (const OlneSolution& s : out) {
      if (s.converged) return &s;
    }
    return nullptr;
  };
  first = first_converged();
  if (first == nullptr && options.continuation && HasInteractionTerms(game)) {
    out.push_back(ContinuationSolve(game, theta, options));
    first = first_converged();
  }
  if (first == nullptr) {
    throw Error(ErrorCode::kNoConvergence,
                "no shooting start converged (" +
                    std::to_string(guesses.size()) + " tried)");
  }
  if (game.family() == "collision") {
    const CostateGuess mirrored = MirroredGuess(game, theta, *first);
    out.push_back(Shoot(game, theta, mirrored, options));
  }
  return out;
}

const OlneSolution& SelectBestOlne(const std::vector<OlneSolution>& candidates,
                                   const Trajectory& gt) {
  const OlneSolution* best = nullptr;
  double best_error = kInf;
  for (const OlneSolution& c : candidates) {
    if (!c.converged) continue;
    const Trajectory aligned = gt.grid == c.trajectory.grid
                                   ? gt
                                   : gt.Resampled(c.trajectory.grid);
    const double e = Nsae(aligned, c.trajectory).total;
    if (best == nullptr || e < best_error) {
      best = &c;
      best_error = e;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::kNoConvergedCandidate,
                "no converged OLNE candidate to select from");
  }
  return *best;
}

double StationarityResidual(const GameDefinition& game,
                            const ParameterVector& theta,
                            const OlneSolution& solution) {
  double worst = 0.0;
  const Trajectory& traj = solution.trajectory;
  for (int k = 0; k < traj.size(); ++k) {
    for (int i = 0; i < game.num_players(); ++i) {
      const auto grads =
          EvalHamiltonianGrads(game, theta, traj.states[k], traj.controls[k],
                               solution.costates.psi[i][k], i);
      worst = std::max(worst, grads.grad_u.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace idg

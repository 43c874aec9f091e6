///////////////////////////////////////////////////////////////////////////////
//
// Open-loop Nash equilibria by single shooting on the minimum-principle
// boundary-value problem.
//
// Costates are reported for the folded Hamiltonian
//
//     H_i = theta_i^T phi_i(x, u) + psi_i^T f(x, u),
//
// whose terminal condition is psi_i(T) = 0. Internally the shooting runs on
// the unfolded costate psi_i + grad h_i(x), which obeys the plain running-cost
// adjoint equation with psi(T) = grad h_i(x(T)); both describe the same
// equilibrium but the unfolded form avoids the large terminal-weight terms in
// the costate dynamics.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_FORWARD_SOLVER_H
#define IDG_FORWARD_SOLVER_H

#include <string>
#include <vector>

#include "idg/game_model.h"

namespace idg {

struct ShootingOptions {
  int max_iterations = 50;
  // Forward-difference step, scaled by max(1, |p_j|) per coordinate.
  double fd_step = 1e-6;
  // An iterate is abandoned once any state norm exceeds this.
  double divergence_bound = 1e6;
  // Convergence: max-norm terminal violation <= tol * (1 + |grad h|_inf).
  double tolerance = 1e-6;
  // Armijo sufficient-decrease constant and smallest step fraction.
  double armijo = 1e-4;
  double min_step = 1.0 / 1024.0;
  // Lets SolveOlneMultiStart fall back to ContinuationSolve.
  bool continuation = true;
};

// Initial guess for the stacked folded costate psi(0) (N * n entries).
struct CostateGuess {
  std::string label;
  Vector psi0;
};

struct OlneSolution {
  Trajectory trajectory;
  CostateTrajectory costates;
  // Stacked folded psi(0).
  Vector initial_costate;
  double shooting_residual = 0.0;
  double tolerance = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string start_label;
};

// One damped-Newton shooting run from `guess`. Never throws on
// non-convergence; the flag and residual report the outcome.
OlneSolution Shoot(const GameDefinition& game, const ParameterVector& theta,
                   const CostateGuess& guess,
                   const ShootingOptions& options = {});

// Shoots from every guess, in order. Throws kNoConvergence when none
// converges.
std::vector<OlneSolution> SolveOlne(const GameDefinition& game,
                                    const ParameterVector& theta,
                                    const std::vector<CostateGuess>& guesses,
                                    const ShootingOptions& options = {});

// psi(0) = 0.
CostateGuess ZeroGuess(const GameDefinition& game);

// Costate of the constant trajectory x(t) = x0, u = 0, integrated backward
// from the terminal condition.
CostateGuess ConstantStateGuess(const GameDefinition& game,
                                const ParameterVector& theta);

// Reflects each robot's path of `base` across the line through its start
// and target and re-derives the robot's own costate block from stationarity
// at t = 0 with the mirrored initial velocity. Collision games only
// (kNotApplicable otherwise).
CostateGuess MirroredGuess(const GameDefinition& game,
                           const ParameterVector& theta,
                           const OlneSolution& base);

// Homotopy on the inverse-distance weights: solves with those weights
// scaled by lambda = 0 first, then raises lambda to 1 with adaptive steps
// (doubled after a converged solve, halved after a failed one), each solve
// started from the previous psi(0). Gives up below a 1/1024 step, after 64
// solves or after 400 Newton iterations in total. The result carries the label
// "continuation" and is flagged converged only when lambda reached 1.
// Throws kNotApplicable for games without inverse-distance terms.
OlneSolution ContinuationSolve(const GameDefinition& game,
                               const ParameterVector& theta,
                               const ShootingOptions& options = {});

// The default start protocol: zero and constant-state guesses, the
// continuation start when both fail on a game with inverse-distance terms
// and `options.continuation` is set,
// then for the collision game a mirrored guess built from the first
// converged solution. `extra` guesses are tried first. Throws
// kNoConvergence when nothing converges.
std::vector<OlneSolution> SolveOlneMultiStart(
    const GameDefinition& game, const ParameterVector& theta,
    const std::vector<CostateGuess>& extra = {},
    const ShootingOptions& options = {});

// Converged candidate with the smallest trajectory error against `gt`; ties
// go to the earlier candidate. Throws kNoConvergedCandidate.
const OlneSolution& SelectBestOlne(const std::vector<OlneSolution>& candidates,
                                   const Trajectory& gt);

// Max over grid points and players of |grad_{u_i} H_i| on a solution.
double StationarityResidual(const GameDefinition& game,
                            const ParameterVector& theta,
                            const OlneSolution& solution);

}  // namespace idg

#endif  // IDG_FORWARD_SOLVER_H

///////////////////////////////////////////////////////////////////////////////
//
// Dynamic game definitions: input-affine dynamics
//
//     xdot = f_x(x) + sum_i G_i(x) u_i,
//
// and per-player cost bases. Player i's cost is the integral of
// theta_i^T phi_i(x, u) with
//
//     phi_i = [ mu_i(x, u_i) ; (d lambda_i / dx) xdot ],
//
// i.e. the terminal basis lambda_i is folded into the integrand through its
// time derivative. Whenever xdot appears inside phi_i it is replaced by
// f(x, u) before differentiating, so d phi_i / d u_i picks up the
// (d lambda_i / dx) G_i contribution.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_GAME_MODEL_H
#define IDG_GAME_MODEL_H

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "idg/numerics.h"

namespace idg {

// Minimum robot separation for the inverse-distance terms [m]. Below it the
// basis refuses to evaluate instead of clamping.
inline constexpr double kDistanceFloor = 1e-6;

class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  int state_dim() const { return state_dim_; }
  int num_players() const { return static_cast<int>(control_dims_.size()); }
  const std::vector<int>& control_dims() const { return control_dims_; }
  int control_dim(int player) const { return control_dims_.at(player); }
  int total_control_dim() const;
  // Offset of player `player`'s block inside the stacked control vector.
  int control_offset(int player) const;

  virtual Vector Drift(const Vector& x) const = 0;
  virtual Matrix InputMap(const Vector& x, int player) const = 0;
  // df/dx at (x, u), including the x-dependence of the input maps.
  virtual Matrix StateJacobian(const Vector& x, const Vector& u) const = 0;

  Vector Evaluate(const Vector& x, const Vector& u) const;
  Matrix ControlJacobian(const Vector& x, int player) const {
    return InputMap(x, player);
  }

  // In-place variants used inside integrators. The defaults route through
  // the allocating versions above.
  virtual void EvaluateInto(const Vector& x, const Vector& u,
                            Vector& out) const;
  // out = (df/dx)^T v
  virtual void StateJacobianTransposeTimes(const Vector& x, const Vector& u,
                                           const Vector& v, Vector& out) const;
  // out = G_i(x)^T v
  virtual void InputMapTransposeTimes(const Vector& x, int player,
                                      const Vector& v, Vector& out) const;

 protected:
  DynamicsModel(int state_dim, std::vector<int> control_dims);

 private:
  int state_dim_;
  std::vector<int> control_dims_;
};

// xdot = A x + sum_i B_i u_i.
class LinearDynamics final : public DynamicsModel {
 public:
  LinearDynamics(Matrix a, std::vector<Matrix> b);

  const Matrix& a() const { return a_; }
  const Matrix& b(int player) const { return b_.at(player); }

  Vector Drift(const Vector& x) const override { return a_ * x; }
  Matrix InputMap(const Vector&, int player) const override {
    return b_.at(player);
  }
  Matrix StateJacobian(const Vector&, const Vector&) const override {
    return a_;
  }
  void EvaluateInto(const Vector& x, const Vector& u,
                    Vector& out) const override;
  void StateJacobianTransposeTimes(const Vector& x, const Vector& u,
                                   const Vector& v,
                                   Vector& out) const override;
  void InputMapTransposeTimes(const Vector& x, int player, const Vector& v,
                              Vector& out) const override;

 private:
  Matrix a_;
  std::vector<Matrix> b_;
  Matrix b_stacked_;  // [B_1 ... B_N]
};

// u_{i,component}^2, with `component` indexing player i's own control.
struct ControlSquare {
  int component = 0;
  bool operator==(const ControlSquare&) const = default;
};

// (x_component - target)^2
struct StateSquare {
  int component = 0;
  double target = 0.0;
  bool operator==(const StateSquare&) const = default;
};

// || x[self] - x[other] ||_2^(-power)
struct InverseDistance {
  int power = 1;
  std::vector<int> self;
  std::vector<int> other;
  bool operator==(const InverseDistance&) const = default;
};

using RunningTerm = std::variant<ControlSquare, StateSquare, InverseDistance>;

struct PlayerBasis {
  std::vector<RunningTerm> running;  // mu_i
  std::vector<StateSquare> terminal;  // lambda_i

  int size() const {
    return static_cast<int>(running.size() + terminal.size());
  }
  bool operator==(const PlayerBasis&) const = default;
};

// Per-player weights theta_i = [eta_i; zeta_i].
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<Vector> per_player)
      : per_player_(std::move(per_player)) {}

  static ParameterVector FromStacked(const Vector& stacked,
                                     const std::vector<int>& dims);

  int num_players() const { return static_cast<int>(per_player_.size()); }
  const Vector& player(int i) const { return per_player_.at(i); }
  Vector& player(int i) { return per_player_.at(i); }
  std::vector<int> dims() const;
  Vector Stacked() const;
  ParameterVector Scaled(double c) const;
  bool AllFinite() const;

 private:
  std::vector<Vector> per_player_;
};

struct Trajectory {
  TimeGrid grid{0.0, 1.0, 2};
  std::vector<Vector> states;    // one per grid point, size n
  std::vector<Vector> controls;  // one per grid point, size sum_i m_i

  int size() const { return static_cast<int>(states.size()); }
  // Throws kInvalidArgument unless both channels have one sample per point.
  void Validate() const;
  // Linear resampling onto another grid spanning the same or a sub-interval.
  Trajectory Resampled(const TimeGrid& target) const;
};

// psi[i][k]: player i's costate at grid point k.
struct CostateTrajectory {
  std::vector<std::vector<Vector>> psi;
};

enum class DoubleIntegratorBasis { kFull, kReduced };

class GameDefinition {
 public:
  GameDefinition(std::string family,
                 std::shared_ptr<const DynamicsModel> dynamics,
                 std::vector<PlayerBasis> basis, double horizon, Vector x0,
                 int steps);

  const std::string& family() const { return family_; }
  const DynamicsModel& dynamics() const { return *dynamics_; }
  std::shared_ptr<const DynamicsModel> dynamics_ptr() const {
    return dynamics_;
  }
  const std::vector<PlayerBasis>& basis() const { return basis_; }
  const PlayerBasis& basis(int player) const { return basis_.at(player); }
  double horizon() const { return horizon_; }
  const Vector& x0() const { return x0_; }
  const TimeGrid& grid() const { return grid_; }

  int num_players() const { return dynamics_->num_players(); }
  int state_dim() const { return dynamics_->state_dim(); }
  int control_dim(int player) const { return dynamics_->control_dim(player); }
  int total_control_dim() const { return dynamics_->total_control_dim(); }
  int control_offset(int player) const {
    return dynamics_->control_offset(player);
  }
  int basis_dim(int player) const { return basis_.at(player).size(); }
  std::vector<int> basis_dims() const;

  // Copies with a different initial state / horizon / basis.
  GameDefinition WithInitialState(const Vector& x0) const;
  GameDefinition WithHorizon(double horizon, int steps) const;
  GameDefinition WithBasis(std::vector<PlayerBasis> basis) const;

  // Player i's control block of the stacked control.
  Vector PlayerControl(const Vector& u, int player) const {
    return u.segment(control_offset(player), control_dim(player));
  }

  Vector Phi(int player, const Vector& x, const Vector& u) const;
  Vector TerminalBasis(int player, const Vector& x) const;
  // d phi_i / dx (M_i x n) and d phi_i / du_i (M_i x m_i).
  Matrix PhiStateJacobian(int player, const Vector& x, const Vector& u) const;
  Matrix PhiControlJacobian(int player, const Vector& x,
                            const Vector& u) const;

  // Running-cost parts only: out += grad_x (eta_i^T mu_i) and
  // out += grad_{u_i} (eta_i^T mu_i). `theta` is the full theta_i.
  void AddRunningStateGradient(int player, const Vector& theta,
                               const Vector& x, Vector& out) const;
  void AddRunningControlGradient(int player, const Vector& theta,
                                 const Vector& u, Vector& out) const;
  // out += (d phi_i / dx)^T theta_i, given f = f(x, u).
  void AddWeightedStateGradient(int player, const Vector& theta,
                                const Vector& x, const Vector& u,
                                const Vector& f, Vector& out) const;
  // out += (d phi_i / du_i)^T theta_i.
  void AddWeightedControlGradient(int player, const Vector& theta,
                                  const Vector& x, const Vector& u,
                                  Vector& out) const;
  // d^2 (theta_i^T phi_i) / du_i^2, constant in (x, u) for these bases.
  Matrix WeightedControlHessian(int player, const Vector& theta) const;

  // h_i(x) = zeta_i^T lambda_i(x) and its gradient.
  double TerminalCost(int player, const Vector& theta, const Vector& x) const;
  Vector TerminalCostGradient(int player, const Vector& theta,
                              const Vector& x) const;
  // out += grad h_i(x), allocation-free.
  void AddTerminalCostGradient(int player, const Vector& theta,
                               const Vector& x, Vector& out) const {
    AccumulateTerminalGradient(player, theta, x, out);
  }

  // Throws kInvalidArgument on dimension mismatch.
  void CheckParameters(const ParameterVector& theta) const;

 private:
  // sum_k zeta_k grad lambda_k(x)
  void AccumulateTerminalGradient(int player, const Vector& theta,
                                  const Vector& x, Vector& w) const;

  std::string family_;
  std::shared_ptr<const DynamicsModel> dynamics_;
  std::vector<PlayerBasis> basis_;
  double horizon_;
  Vector x0_;
  TimeGrid grid_;
};

// Default solver resolution: 100 grid intervals per second.
int DefaultSteps(double horizon);

// Single-player double integrator, x(0) = x0. The full basis is
// [u^2, x1^2, x2^2]; the reduced one drops x1^2.
GameDefinition MakeDoubleIntegrator(double horizon, const Vector& x0,
                                    DoubleIntegratorBasis variant,
                                    int steps = 0);

// Two holonomic robots, xdot_i = u_i, x = [x_1; x_2] in R^4. Per player
//   mu_i     = [u_i1^2, u_i2^2, (x_i1 - xT_i1)^2, (x_i2 - xT_i2)^2,
//               |x_i - x_j|^-1, |x_i - x_j|^-2]
//   lambda_i = [(x_i1 - xT_i1)^2, (x_i2 - xT_i2)^2]
// Throws kDegenerateGeometry when the robots start closer than the floor.
GameDefinition MakeCollisionGame(double horizon, const Vector& x0,
                                 const Vector& targets, int steps = 0);

// Targets stored in a collision game's basis (4-vector).
Vector CollisionTargets(const GameDefinition& game);

struct LtiPlayerSpec {
  // Weighted state squares in the running cost (x_k^2 for each listed k).
  std::vector<int> state_terms;
  // Terminal state squares x_k(T)^2.
  std::vector<int> terminal_terms;
};

// Generic LTI game with quadratic bases: each player's running basis is
// [u_i1^2 .. u_im^2, x_k^2 for k in state_terms], terminal basis
// [x_k^2 for k in terminal_terms].
GameDefinition MakeLtiQuadraticGame(const Matrix& a,
                                    const std::vector<Matrix>& b,
                                    const std::vector<LtiPlayerSpec>& players,
                                    double horizon, const Vector& x0,
                                    int steps = 0);

struct HamiltonianGradients {
  Vector grad_u;  // m_i
  Vector grad_x;  // n
};

// Gradients of H_i = theta_i^T phi_i + psi_i^T f.
HamiltonianGradients EvalHamiltonianGrads(const GameDefinition& game,
                                          const ParameterVector& theta,
                                          const Vector& x, const Vector& u,
                                          const Vector& psi, int player);

}  // namespace idg

#endif  // IDG_GAME_MODEL_H

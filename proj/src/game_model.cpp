#include "idg/game_model.h"

#include <cmath>
#include <numeric>
#include <string>

namespace idg {
namespace {

void CheckIndex(int index, int bound, const char* what) {
  if (index < 0 || index >= bound) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " index " + std::to_string(index) +
                    " out of range [0, " + std::to_string(bound) + ")");
  }
}

// Separation vector x[self] - x[other] and its norm, guarded by the floor.
double Separation(const InverseDistance& term, const Vector& x,
                  Vector& delta) {
  const int dim = static_cast<int>(term.self.size());
  delta.resize(dim);
  for (int d = 0; d < dim; ++d) delta[d] = x[term.self[d]] - x[term.other[d]];
  const double dist = delta.norm();
  if (!(dist >= kDistanceFloor)) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "inverse-distance term evaluated at separation " +
                    std::to_string(dist) + " below the floor");
  }
  return dist;
}

}  // namespace

// ---------------------------------------------------------------------------
// DynamicsModel

DynamicsModel::DynamicsModel(int state_dim, std::vector<int> control_dims)
    : state_dim_(state_dim), control_dims_(std::move(control_dims)) {
  if (state_dim_ <= 0 || control_dims_.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "dynamics need a positive state dimension and >= 1 player");
  }
  for (int m : control_dims_) {
    if (m <= 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "control dimensions must be positive");
    }
  }
}

int DynamicsModel::total_control_dim() const {
  return std::accumulate(control_dims_.begin(), control_dims_.end(), 0);
}

int DynamicsModel::control_offset(int player) const {
  CheckIndex(player, num_players(), "player");
  return std::accumulate(control_dims_.begin(),
                         control_dims_.begin() + player, 0);
}

Vector DynamicsModel::Evaluate(const Vector& x, const Vector& u) const {
  Vector out(state_dim_);
  EvaluateInto(x, u, out);
  return out;
}

void DynamicsModel::EvaluateInto(const Vector& x, const Vector& u,
                                 Vector& out) const {
  out = Drift(x);
  for (int i = 0; i < num_players(); ++i) {
    out += InputMap(x, i) * u.segment(control_offset(i), control_dim(i));
  }
}

void DynamicsModel::StateJacobianTransposeTimes(const Vector& x,
                                                const Vector& u,
                                                const Vector& v,
                                                Vector& out) const {
  out = StateJacobian(x, u).transpose() * v;
}

void DynamicsModel::InputMapTransposeTimes(const Vector& x, int player,
                                           const Vector& v,
                                           Vector& out) const {
  out = InputMap(x, player).transpose() * v;
}

LinearDynamics::LinearDynamics(Matrix a, std::vector<Matrix> b)
    : DynamicsModel(static_cast<int>(a.rows()),
                    [&b] {
                      std::vector<int> dims;
                      for (const Matrix& bi : b)
                        dims.push_back(static_cast<int>(bi.cols()));
                      return dims;
                    }()),
      a_(std::move(a)),
      b_(std::move(b)) {
  if (a_.rows() != a_.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "A must be square");
  }
  b_stacked_.resize(a_.rows(), total_control_dim());
  for (int i = 0; i < num_players(); ++i) {
    if (b_[i].rows() != a_.rows()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "B_" + std::to_string(i) + " has the wrong row count");
    }
    b_stacked_.middleCols(control_offset(i), control_dim(i)) = b_[i];
  }
}

void LinearDynamics::EvaluateInto(const Vector& x, const Vector& u,
                                  Vector& out) const {
  out.noalias() = a_ * x;
  out.noalias() += b_stacked_ * u;
}

void LinearDynamics::StateJacobianTransposeTimes(const Vector&, const Vector&,
                                                 const Vector& v,
                                                 Vector& out) const {
  out.noalias() = a_.transpose() * v;
}

void LinearDynamics::InputMapTransposeTimes(const Vector&, int player,
                                            const Vector& v,
                                            Vector& out) const {
  out.noalias() = b_[player].transpose() * v;
}

// ---------------------------------------------------------------------------
// ParameterVector

ParameterVector ParameterVector::FromStacked(const Vector& stacked,
                                             const std::vector<int>& dims) {
  const int total = std::accumulate(dims.begin(), dims.end(), 0);
  if (stacked.size() != total) {
    throw Error(ErrorCode::kInvalidArgument,
                "stacked parameter vector has length " +
                    std::to_string(stacked.size()) + ", expected " +
                    std::to_string(total));
  }
  std::vector<Vector> out;
  int offset = 0;
  for (int d : dims) {
    out.push_back(stacked.segment(offset, d));
    offset += d;
  }
  return ParameterVector(std::move(out));
}

std::vector<int> ParameterVector::dims() const {
  std::vector<int> out;
  for (const Vector& v : per_player_) out.push_back(static_cast<int>(v.size()));
  return out;
}

Vector ParameterVector::Stacked() const {
  int total = 0;
  for (const Vector& v : per_player_) total += static_cast<int>(v.size());
  Vector out(total);
  int offset = 0;
  for (const Vector& v : per_player_) {
    out.segment(offset, v.size()) = v;
    offset += static_cast<int>(v.size());
  }
  return out;
}

ParameterVector ParameterVector::Scaled(double c) const {
  ParameterVector out = *this;
  for (Vector& v : out.per_player_) v *= c;
  return out;
}

bool ParameterVector::AllFinite() const {
  for (const Vector& v : per_player_)
    if (!v.allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Trajectory

void Trajectory::Validate() const {
  if (static_cast<int>(states.size()) != grid.size() ||
      static_cast<int>(controls.size()) != grid.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "trajectory needs one state and one control sample per grid "
                "point (grid " +
                    std::to_string(grid.size()) + ", states " +
                    std::to_string(states.size()) + ", controls " +
                    std::to_string(controls.size()) + ")");
  }
}

Trajectory Trajectory::Resampled(const TimeGrid& target) const {
  Validate();
  if (target == grid) return *this;
  Trajectory out{target, {}, {}};
  out.states.reserve(target.size());
  out.controls.reserve(target.size());
  for (int k = 0; k < target.size(); ++k) {
    const double t = target.time(k);
    out.states.push_back(InterpLinear(grid, states, t));
    out.controls.push_back(InterpLinear(grid, controls, t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// GameDefinition

GameDefinition::GameDefinition(std::string family,
                               std::shared_ptr<const DynamicsModel> dynamics,
                               std::vector<PlayerBasis> basis, double horizon,
                               Vector x0, int steps)
    : family_(std::move(family)),
      dynamics_(std::move(dynamics)),
      basis_(std::move(basis)),
      horizon_(horizon),
      x0_(std::move(x0)),
      grid_(0.0, horizon, steps) {
  if (!dynamics_) {
    throw Error(ErrorCode::kInvalidArgument, "game needs a dynamics model");
  }
  const int n = dynamics_->state_dim();
  if (x0_.size() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "x0 has length " + std::to_string(x0_.size()) +
                    ", expected " + std::to_string(n));
  }
  if (static_cast<int>(basis_.size()) != dynamics_->num_players()) {
    throw Error(ErrorCode::kInvalidArgument,
                "one basis per player required");
  }
  for (int i = 0; i < num_players(); ++i) {
    const int m = control_dim(i);
    for (const RunningTerm& term : basis_[i].running) {
      if (const auto* c = std::get_if<ControlSquare>(&term)) {
        CheckIndex(c->component, m, "control");
      } else if (const auto* s = std::get_if<StateSquare>(&term)) {
        CheckIndex(s->component, n, "state");
      } else {
        const auto& d = std::get<InverseDistance>(term);
        if (d.self.size() != d.other.size() || d.self.empty() ||
            d.power <= 0) {
          throw Error(ErrorCode::kInvalidArgument,
                      "malformed inverse-distance term");
        }
        for (int k : d.self) CheckIndex(k, n, "state");
        for (int k : d.other) CheckIndex(k, n, "state");
      }
    }
    for (const StateSquare& s : basis_[i].terminal) {
      CheckIndex(s.component, n, "state");
    }
    if (basis_[i].size() == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "player " + std::to_string(i) + " has an empty basis");
    }
  }
}

std::vector<int> GameDefinition::basis_dims() const {
  std::vector<int> out;
  for (const PlayerBasis& b : basis_) out.push_back(b.size());
  return out;
}

GameDefinition GameDefinition::WithInitialState(const Vector& x0) const {
  return GameDefinition(family_, dynamics_, basis_, horizon_, x0,
                        grid_.steps());
}

GameDefinition GameDefinition::WithHorizon(double horizon, int steps) const {
  return GameDefinition(family_, dynamics_, basis_, horizon, x0_, steps);
}

GameDefinition GameDefinition::WithBasis(std::vector<PlayerBasis> basis) const {
  return GameDefinition(family_, dynamics_, std::move(basis), horizon_, x0_,
                        grid_.steps());
}

void GameDefinition::CheckParameters(const ParameterVector& theta) const {
  if (theta.num_players() != num_players()) {
    throw Error(ErrorCode::kInvalidArgument,
                "parameter vector has " + std::to_string(theta.num_players()) +
                    " players, game has " + std::to_string(num_players()));
  }
  for (int i = 0; i < num_players(); ++i) {
    if (theta.player(i).size() != basis_dim(i)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "theta_" + std::to_string(i) + " has length " +
                      std::to_string(theta.player(i).size()) + ", basis has " +
                      std::to_string(basis_dim(i)));
    }
  }
}

Vector GameDefinition::TerminalBasis(int player, const Vector& x) const {
  const PlayerBasis& b = basis_.at(player);
  Vector out(b.terminal.size());
  for (size_t k = 0; k < b.terminal.size(); ++k) {
    const double e = x[b.terminal[k].component] - b.terminal[k].target;
    out[static_cast<Eigen::Index>(k)] = e * e;
  }
  return out;
}

Vector GameDefinition::Phi(int player, const Vector& x, const Vector& u) const {
  const PlayerBasis& b = basis_.at(player);
  const int offset = control_offset(player);
  Vector out(b.size());
  Vector delta;
  int row = 0;
  for (const RunningTerm& term : b.running) {
    if (const auto* c = std::get_if<ControlSquare>(&term)) {
      const double v = u[offset + c->component];
      out[row] = v * v;
    } else if (const auto* s = std::get_if<StateSquare>(&term)) {
      const double e = x[s->component] - s->target;
      out[row] = e * e;
    } else {
      const auto& d = std::get<InverseDistance>(term);
      out[row] = std::pow(Separation(d, x, delta), -d.power);
    }
    ++row;
  }
  if (!b.terminal.empty()) {
    const Vector f = dynamics_->Evaluate(x, u);
    for (const StateSquare& s : b.terminal) {
      out[row++] = 2.0 * (x[s.component] - s.target) * f[s.component];
    }
  }
  return out;
}

Matrix GameDefinition::PhiStateJacobian(int player, const Vector& x,
                                        const Vector& u) const {
  const PlayerBasis& b = basis_.at(player);
  const int n = state_dim();
  Matrix out = Matrix::Zero(b.size(), n);
  Vector delta;
  int row = 0;
  for (const RunningTerm& term : b.running) {
    if (std::holds_alternative<ControlSquare>(term)) {
      // no state dependence
    } else if (const auto* s = std::get_if<StateSquare>(&term)) {
      out(row, s->component) = 2.0 * (x[s->component] - s->target);
    } else {
      const auto& d = std::get<InverseDistance>(term);
      const double dist = Separation(d, x, delta);
      const double coeff = -d.power * std::pow(dist, -d.power - 2);
      for (size_t c = 0; c < d.self.size(); ++c) {
        out(row, d.self[c]) += coeff * delta[static_cast<Eigen::Index>(c)];
        out(row, d.other[c]) -= coeff * delta[static_cast<Eigen::Index>(c)];
      }
    }
    ++row;
  }
  if (!b.terminal.empty()) {
    const Vector f = dynamics_->Evaluate(x, u);
    const Matrix fx = dynamics_->StateJacobian(x, u);
    for (const StateSquare& s : b.terminal) {
      // d/dx [2 (x_c - t) f_c] = 2 f_c e_c + 2 (x_c - t) df_c/dx
      out.row(row) = 2.0 * (x[s.component] - s.target) * fx.row(s.component);
      out(row, s.component) += 2.0 * f[s.component];
      ++row;
    }
  }
  return out;
}

Matrix GameDefinition::PhiControlJacobian(int player, const Vector& x,
                                          const Vector& u) const {
  const PlayerBasis& b = basis_.at(player);
  const int m = control_dim(player);
  const int offset = control_offset(player);
  Matrix out = Matrix::Zero(b.size(), m);
  int row = 0;
  for (const RunningTerm& term : b.running) {
    if (const auto* c = std::get_if<ControlSquare>(&term)) {
      out(row, c->component) = 2.0 * u[offset + c->component];
    }
    ++row;
  }
  if (!b.terminal.empty()) {
    const Matrix g = dynamics_->InputMap(x, player);
    for (const StateSquare& s : b.terminal) {
      out.row(row++) = 2.0 * (x[s.component] - s.target) * g.row(s.component);
    }
  }
  return out;
}

void GameDefinition::AccumulateTerminalGradient(int player,
                                                const Vector& theta,
                                                const Vector& x,
                                                Vector& w) const {
  const PlayerBasis& b = basis_[player];
  const int first = static_cast<int>(b.running.size());
  for (size_t k = 0; k < b.terminal.size(); ++k) {
    const StateSquare& s = b.terminal[k];
    w[s.component] +=
        theta[first + static_cast<int>(k)] * 2.0 * (x[s.component] - s.target);
  }
}

void GameDefinition::AddRunningStateGradient(int player, const Vector& theta,
                                             const Vector& x,
                                             Vector& out) const {
  const PlayerBasis& b = basis_[player];
  int row = 0;
  for (const RunningTerm& term : b.running) {
    const double w = theta[row++];
    if (std::holds_alternative<ControlSquare>(term)) continue;
    if (const auto* s = std::get_if<StateSquare>(&term)) {
      out[s->component] += w * 2.0 * (x[s->component] - s->target);
      continue;
    }
    const auto& d = std::get<InverseDistance>(term);
    double sq = 0.0;
    for (size_t c = 0; c < d.self.size(); ++c) {
      const double e = x[d.self[c]] - x[d.other[c]];
      sq += e * e;
    }
    const double dist = std::sqrt(sq);
    if (!(dist >= kDistanceFloor)) {
      throw Error(ErrorCode::kDegenerateGeometry,
                  "inverse-distance term evaluated at separation " +
                      std::to_string(dist) + " below the floor");
    }
    const double coeff = -w * d.power * std::pow(dist, -d.power - 2);
    for (size_t c = 0; c < d.self.size(); ++c) {
      const double e = x[d.self[c]] - x[d.other[c]];
      out[d.self[c]] += coeff * e;
      out[d.other[c]] -= coeff * e;
    }
  }
}

void GameDefinition::AddRunningControlGradient(int player, const Vector& theta,
                                               const Vector& u,
                                               Vector& out) const {
  const PlayerBasis& b = basis_[player];
  const int offset = control_offset(player);
  int row = 0;
  for (const RunningTerm& term : b.running) {
    const double w = theta[row++];
    if (const auto* c = std::get_if<ControlSquare>(&term)) {
      out[c->component] += w * 2.0 * u[offset + c->component];
    }
  }
}

void GameDefinition::AddWeightedStateGradient(int player, const Vector& theta,
                                              const Vector& x, const Vector& u,
                                              const Vector& f,
                                              Vector& out) const {
  AddRunningStateGradient(player, theta, x, out);
  const PlayerBasis& b = basis_[player];
  if (b.terminal.empty()) return;
  const int row = static_cast<int>(b.running.size());
  Vector grad = Vector::Zero(state_dim());
  AccumulateTerminalGradient(player, theta, x, grad);
  for (size_t k = 0; k < b.terminal.size(); ++k) {
    const StateSquare& s = b.terminal[k];
    out[s.component] += theta[row + static_cast<int>(k)] * 2.0 * f[s.component];
  }
  Vector tmp(state_dim());
  dynamics_->StateJacobianTransposeTimes(x, u, grad, tmp);
  out += tmp;
}

void GameDefinition::AddWeightedControlGradient(int player,
                                                const Vector& theta,
                                                const Vector& x,
                                                const Vector& u,
                                                Vector& out) const {
  AddRunningControlGradient(player, theta, u, out);
  const PlayerBasis& b = basis_[player];
  if (b.terminal.empty()) return;
  Vector grad = Vector::Zero(state_dim());
  AccumulateTerminalGradient(player, theta, x, grad);
  Vector tmp(control_dim(player));
  dynamics_->InputMapTransposeTimes(x, player, grad, tmp);
  out += tmp;
}

Matrix GameDefinition::WeightedControlHessian(int player,
                                              const Vector& theta) const {
  const PlayerBasis& b = basis_.at(player);
  const int m = control_dim(player);
  Matrix out = Matrix::Zero(m, m);
  int row = 0;
  for (const RunningTerm& term : b.running) {
    const double w = theta[row++];
    if (const auto* c = std::get_if<ControlSquare>(&term)) {
      out(c->component, c->component) += 2.0 * w;
    }
  }
  return out;
}

double GameDefinition::TerminalCost(int player, const Vector& theta,
                                    const Vector& x) const {
  const PlayerBasis& b = basis_.at(player);
  const Vector lambda = TerminalBasis(player, x);
  return theta.tail(static_cast<Eigen::Index>(b.terminal.size())).dot(lambda);
}

Vector GameDefinition::TerminalCostGradient(int player, const Vector& theta,
                                            const Vector& x) const {
  Vector grad = Vector::Zero(state_dim());
  AccumulateTerminalGradient(player, theta, x, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Built-in families

int DefaultSteps(double horizon) {
  return std::max(2, static_cast<int>(std::lround(horizon * 100.0)));
}

GameDefinition MakeDoubleIntegrator(double horizon, const Vector& x0,
                                    DoubleIntegratorBasis variant, int steps) {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix b(2, 1);
  b << 0, 1;
  PlayerBasis basis;
  basis.running.push_back(ControlSquare{0});
  if (variant == DoubleIntegratorBasis::kFull) {
    basis.running.push_back(StateSquare{0, 0.0});
  }
  basis.running.push_back(StateSquare{1, 0.0});
  return GameDefinition(
      variant == DoubleIntegratorBasis::kFull ? "double_integrator"
                                              : "double_integrator_reduced",
      std::make_shared<LinearDynamics>(a, std::vector<Matrix>{b}), {basis},
      horizon, x0, steps > 0 ? steps : DefaultSteps(horizon));
}

GameDefinition MakeCollisionGame(double horizon, const Vector& x0,
                                 const Vector& targets, int steps) {
  if (x0.size() != 4 || targets.size() != 4) {
    throw Error(ErrorCode::kInvalidArgument,
                "collision game needs 4-dimensional x0 and targets");
  }
  if ((x0.head<2>() - x0.tail<2>()).norm() < kDistanceFloor) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "robots start closer than the distance floor");
  }
  Matrix a = Matrix::Zero(4, 4);
  Matrix b1 = Matrix::Zero(4, 2);
  Matrix b2 = Matrix::Zero(4, 2);
  b1.topRows<2>().setIdentity();
  b2.bottomRows<2>().setIdentity();

  std::vector<PlayerBasis> basis(2);
  for (int i = 0; i < 2; ++i) {
    const int self = 2 * i;
    const int other = 2 * (1 - i);
    PlayerBasis& p = basis[i];
    p.running = {
        ControlSquare{0},
        ControlSquare{1},
        StateSquare{self, targets[self]},
        StateSquare{self + 1, targets[self + 1]},
        InverseDistance{1, {self, self + 1}, {other, other + 1}},
        InverseDistance{2, {self, self + 1}, {other, other + 1}},
    };
    p.terminal = {StateSquare{self, targets[self]},
                  StateSquare{self + 1, targets[self + 1]}};
  }
  return GameDefinition("collision",
                        std::make_shared<LinearDynamics>(
                            a, std::vector<Matrix>{b1, b2}),
                        std::move(basis), horizon, x0,
                        steps > 0 ? steps : DefaultSteps(horizon));
}

Vector CollisionTargets(const GameDefinition& game) {
  if (game.family() != "collision") {
    throw Error(ErrorCode::kNotApplicable, "not a collision game");
  }
  Vector out(4);
  for (int i = 0; i < 2; ++i) {
    for (const StateSquare& s : game.basis(i).terminal) {
      out[s.component] = s.target;
    }
  }
  return out;
}

GameDefinition MakeLtiQuadraticGame(const Matrix& a,
                                    const std::vector<Matrix>& b,
                                    const std::vector<LtiPlayerSpec>& players,
                                    double horizon, const Vector& x0,
                                    int steps) {
  if (players.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "one player spec per input matrix required");
  }
  std::vector<PlayerBasis> basis(players.size());
  for (size_t i = 0; i < players.size(); ++i) {
    for (int j = 0; j < b[i].cols(); ++j) {
      basis[i].running.push_back(ControlSquare{j});
    }
    for (int k : players[i].state_terms) {
      basis[i].running.push_back(StateSquare{k, 0.0});
    }
    for (int k : players[i].terminal_terms) {
      basis[i].terminal.push_back(StateSquare{k, 0.0});
    }
  }
  return GameDefinition("lti_quadratic",
                        std::make_shared<LinearDynamics>(a, b),
                        std::move(basis), horizon, x0,
                        steps > 0 ? steps : DefaultSteps(horizon));
}

HamiltonianGradients EvalHamiltonianGrads(const GameDefinition& game,
                                          const ParameterVector& theta,
                                          const Vector& x, const Vector& u,
                                          const Vector& psi, int player) {
  game.CheckParameters(theta);
  const int n = game.state_dim();
  if (x.size() != n || psi.size() != n ||
      u.size() != game.total_control_dim()) {
    throw Error(ErrorCode::kInvalidArgument,
                "Hamiltonian gradient inputs have inconsistent dimensions");
  }
  const DynamicsModel& dyn = game.dynamics();
  const Vector& th = theta.player(player);
  const Vector f = dyn.Evaluate(x, u);

  HamiltonianGradients out{Vector::Zero(game.control_dim(player)),
                           Vector::Zero(n)};
  game.AddWeightedControlGradient(player, th, x, u, out.grad_u);
  out.grad_u += dyn.InputMap(x, player).transpose() * psi;
  game.AddWeightedStateGradient(player, th, x, u, f, out.grad_x);
  out.grad_x += dyn.StateJacobian(x, u).transpose() * psi;
  if (!out.grad_u.allFinite() || !out.grad_x.allFinite()) {
    throw Error(ErrorCode::kNonFiniteState,
                "Hamiltonian gradient is not finite");
  }
  return out;
}

}  // namespace idg

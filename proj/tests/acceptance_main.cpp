// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "idg/experiments.h"
#include "oracles.h"

namespace idg {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit = 0.0;  // seconds
  std::function<Outcome()> run;
};

std::string Fmt(const char* format, double a, double b = 0.0,
                double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c, d);
  return buf;
}

GameDefinition DoubleIntegrator(DoubleIntegratorBasis basis) {
  return MakeDoubleIntegrator(6.0, Eigen::Vector2d(1.0, -1.0), basis);
}

GameDefinition CollisionGame() { return CollisionPreset().game; }

GameDefinition LtiGame() {
  Matrix a(3, 3);
  a << 0, 1, 0, -1, -0.2, 0.5, 0, 0, -0.3;
  Matrix b1(3, 1), b2(3, 1);
  b1 << 0, 1, 0;
  b2 << 0, 0, 1;
  return MakeLtiQuadraticGame(a, {b1, b2}, {{{0, 1}, {0}}, {{2}, {1, 2}}},
                              3.0, Eigen::Vector3d(1.0, 0.5, -0.5));
}

ParameterVector LtiTheta() {
  return ParameterVector({Vector(Eigen::Vector4d(1.0, 2.0, 0.5, 3.0)),
                          Vector(Eigen::Vector4d(1.0, 1.5, 2.0, 1.0))});
}

Vector Uniform(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Vector v(n);
  for (int k = 0; k < n; ++k) v[k] = uni(rng);
  return v;
}

Matrix Normal(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

// ---------------------------------------------------------------------------

Outcome GradientSuite() {
  std::mt19937_64 rng(11);
  const std::vector<GameDefinition> games = {
      DoubleIntegrator(DoubleIntegratorBasis::kFull),
      DoubleIntegrator(DoubleIntegratorBasis::kReduced), CollisionGame(),
      LtiGame()};
  double worst = 0.0;
  for (const GameDefinition& game : games) {
    const DynamicsModel& dyn = game.dynamics();
    const int n = game.state_dim();
    for (int sample = 0; sample < 100; ++sample) {
      Vector x = Uniform(rng, n, -1.5, 1.5);
      while (game.family() == "collision" &&
             (x.head<2>() - x.tail<2>()).norm() < 0.3) {
        x = Uniform(rng, n, -1.5, 1.5);
      }
      const Vector u = Uniform(rng, game.total_control_dim(), -1.5, 1.5);
      auto track = [&worst](const Matrix& a, const Matrix& b) {
        worst = std::max(worst, oracle::MaxRelativeError(a, b));
      };
      track(dyn.StateJacobian(x, u),
            oracle::CentralJacobian(
                [&](const Vector& xx) { return dyn.Evaluate(xx, u); }, x));
      for (int i = 0; i < game.num_players(); ++i) {
        const int off = game.control_offset(i);
        const int mi = game.control_dim(i);
        auto with_ui = [&](const Vector& ui) {
          Vector uu = u;
          uu.segment(off, mi) = ui;
          return uu;
        };
        const Vector ui = u.segment(off, mi);
        track(dyn.ControlJacobian(x, i),
              oracle::CentralJacobian(
                  [&](const Vector& v) { return dyn.Evaluate(x, with_ui(v)); },
                  ui));
        track(game.PhiStateJacobian(i, x, u),
              oracle::CentralJacobian(
                  [&](const Vector& xx) { return game.Phi(i, xx, u); }, x));
        track(game.PhiControlJacobian(i, x, u),
              oracle::CentralJacobian(
                  [&](const Vector& v) { return game.Phi(i, x, with_ui(v)); },
                  ui));
        std::vector<Vector> per_player;
        for (int p = 0; p < game.num_players(); ++p) {
          per_player.push_back(Uniform(rng, game.basis_dim(p), 0.1, 3.0));
        }
        const ParameterVector theta(per_player);
        const Vector psi = Uniform(rng, n, -1.5, 1.5);
        auto hamiltonian = [&](const Vector& xx, const Vector& uu) {
          return Vector::Constant(
              1, theta.player(i).dot(game.Phi(i, xx, uu)) +
                     psi.dot(dyn.Evaluate(xx, uu)));
        };
        const auto grads = EvalHamiltonianGrads(game, theta, x, u, psi, i);
        track(grads.grad_x.transpose(),
              oracle::CentralJacobian(
                  [&](const Vector& xx) { return hamiltonian(xx, u); }, x));
        track(grads.grad_u.transpose(),
              oracle::CentralJacobian(
                  [&](const Vector& v) { return hamiltonian(x, with_ui(v)); },
                  ui));
      }
    }
  }
  return {worst <= 1e-5,
          Fmt("4 families x 100 points, worst relative error %.2e", worst)};
}

Outcome ForwardOracle() {
  const GameDefinition di = DoubleIntegrator(DoubleIntegratorBasis::kFull);
  const ParameterVector theta({Vector(Eigen::Vector3d(1.0, 2.0, 1.0))});
  const OlneSolution sol = Shoot(di, theta, ZeroGuess(di));
  const auto& lin = dynamic_cast<const LinearDynamics&>(di.dynamics());
  const oracle::LqSolution lq = oracle::SolveLq(
      lin.a(), lin.b(0), Vector(Eigen::Vector2d(2.0, 1.0)).asDiagonal(),
      Matrix::Identity(1, 1), Matrix::Zero(2, 2), di.x0(), 6.0,
      di.grid().steps());
  const double di_error =
      sol.converged ? oracle::MaxStateError(sol.trajectory.states, lq.states)
                    : INFINITY;

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 4);
  double lti_worst = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    const int n = dim(rng);
    const int m = std::min(n, 1 + instance % 2);
    const Matrix a = 0.5 * Normal(rng, n, n);
    const Matrix b = 0.5 * Normal(rng, n, m) + Matrix::Identity(n, m);
    LtiPlayerSpec spec;
    for (int k = 0; k < n; ++k) {
      spec.state_terms.push_back(k);
      if (k % 2 == 0) spec.terminal_terms.push_back(k);
    }
    const Vector x0 = Normal(rng, n, 1).col(0);
    const GameDefinition game = MakeLtiQuadraticGame(a, {b}, {spec}, 3.0, x0);
    const Vector w = Uniform(rng, game.basis_dim(0), 0.5, 2.0);
    Matrix r = Matrix::Zero(m, m), q = Matrix::Zero(n, n),
           qt = Matrix::Zero(n, n);
    for (int j = 0; j < m; ++j) r(j, j) = w[j];
    for (int k = 0; k < n; ++k) q(k, k) = w[m + k];
    for (size_t k = 0; k < spec.terminal_terms.size(); ++k) {
      const int c = spec.terminal_terms[k];
      qt(c, c) = w[m + n + static_cast<int>(k)];
    }
    const oracle::LqSolution ref =
        oracle::SolveLq(a, b, q, r, qt, x0, 3.0, game.grid().steps());
    const OlneSolution s = Shoot(game, ParameterVector({w}), ZeroGuess(game));
    double scale = 1.0;
    for (const Vector& x : ref.states) scale = std::max(scale, x.norm());
    const double err =
        s.converged ? oracle::MaxStateError(s.trajectory.states, ref.states) /
                          scale
                    : INFINITY;
    lti_worst = std::max(lti_worst, err);
  }
  return {di_error <= 1e-6 && lti_worst <= 1e-6,
          Fmt("double integrator max state error %.2e, 20 LTI instances "
              "worst relative %.2e",
              di_error, lti_worst)};
}

Outcome ResidualEquivalence() {
  struct Case {
    GameDefinition game;
    ParameterVector theta;
  };
  const std::vector<Case> cases = {
      {DoubleIntegrator(DoubleIntegratorBasis::kFull),
       ParameterVector({Vector(Eigen::Vector3d(1, 2, 1))})},
      {DoubleIntegrator(DoubleIntegratorBasis::kReduced),
       ParameterVector({Vector(Eigen::Vector2d(1, 1))})},
      {CollisionGame(), CollisionPreset().truth_theta},
      {LtiGame(), LtiTheta()}};
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (const Case& c : cases) {
    const Trajectory gt =
        SolveOlneMultiStart(c.game, c.theta).front().trajectory;
    for (int i = 0; i < c.game.num_players(); ++i) {
      const RiccatiAssembly assembly = RiccatiBackward(c.game, gt, i);
      for (int trial = 0; trial < 20; ++trial) {
        const Vector theta = Normal(rng, c.game.basis_dim(i), 1).col(0);
        const Vector psi0 = Normal(rng, c.game.state_dim(), 1).col(0);
        Vector alpha(theta.size() + psi0.size());
        alpha << theta, psi0;
        const double quadratic = QuadraticResidual(assembly, alpha);
        const double direct = ResidualDirectPlayer(c.game, gt, i, theta, psi0);
        worst = std::max(worst,
                         std::abs(direct - quadratic) / (1.0 + quadratic));
      }
    }
  }
  return {worst <= 1e-6,
          Fmt("4 games x 20 random alpha per player, worst %.2e", worst)};
}

Outcome WeightRecovery() {
  const GameDefinition game = DoubleIntegrator(DoubleIntegratorBasis::kFull);
  const Vector truth = Eigen::Vector3d(1.0, 2.0, 1.0);
  const Trajectory gt =
      SolveOlneMultiStart(game, ParameterVector({truth})).front().trajectory;
  const RiccatiAssembly assembly = RiccatiBackward(game, gt, 0);
  const ResidualSolution sol =
      SolveResidualQp({assembly}, ConstraintSpec::PinFirstWeights(1));
  const Vector hat = sol.theta.player(0);
  const double err = (hat - truth).cwiseAbs().maxCoeff();
  const double cosine = CosineSimilarity(hat, truth);
  const IdentifiabilityDiagnostics diag = DiagnoseIdentifiability(assembly);
  const bool identifiable = diag.full_rank || diag.block_zero;
  return {err <= 1e-3 && cosine >= 0.9999 && identifiable,
          Fmt("theta_hat = [%.6f %.6f %.6f], cosine %.8f", hat[0], hat[1],
              hat[2], cosine) +
              (identifiable ? ", identifiable" : ", NOT identifiable")};
}

Outcome QpOracle() {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> dim_dist(2, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = dim_dist(rng);
    const int rank = trial % 3 == 0 ? std::max(1, dim - 2) : dim;
    const Matrix a = Normal(rng, dim, rank);
    const Matrix p = a * a.transpose();
    std::vector<int> order(dim);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<int, double>> pins = {{order[0], 1.0}};
    std::vector<std::pair<int, double>> bounds;
    for (int j = 1; j <= std::min(dim - 1, 4); ++j) {
      bounds.emplace_back(order[j], 2.0 * unit(rng) - 0.5);
    }
    const QpResult qp = SolveConstrainedQp(p, pins, bounds);
    const double ref = oracle::BruteForceQp(p, pins, bounds);
    worst = std::max(worst, std::abs(qp.objective - ref) / (1.0 + ref));
  }
  return {worst <= 1e-6,
          Fmt("50 random PSD instances, worst relative gap %.2e", worst)};
}

std::string SweepCsv(const ExperimentResult& r) {
  std::ostringstream out;
  WriteSweepCsv(out, r);
  return out.str();
}

double ValueAt(const ExperimentResult& r, const std::optional<int>& k) {
  return k ? r.points[*k].value : NAN;
}

Outcome Fig1() {
  const ExperimentResult r = RunSweep(SweepPreset("fig1"));
  const double step = r.GridStep();
  const double a = ValueAt(r, r.argmin_residual);
  const double b = ValueAt(r, r.argmin_trajectory);
  const bool ok = std::abs(a - 2.0) <= step + 1e-9 &&
                  std::abs(b - 2.0) <= step + 1e-9 && std::abs(step - 0.1) < 1e-12;
  return {ok, Fmt("argmin delta_R %.2f, argmin delta_T %.2f, grid %.2f", a, b,
                  step)};
}

Outcome Fig2() {
  const ExperimentResult r = RunSweep(SweepPreset("fig2"));
  const double step = r.GridStep();
  const double a = ValueAt(r, r.argmin_residual);
  const double b = ValueAt(r, r.argmin_trajectory);
  const double min_t =
      r.argmin_trajectory ? r.points[*r.argmin_trajectory].trajectory_error->total
                          : NAN;
  const bool ok = std::abs(a - b) > step + 1e-9 && min_t > 0.0;
  return {ok, Fmt("argmin delta_R %.2f, argmin delta_T %.2f (grid %.2f), "
                  "min delta_T %.3g",
                  a, b, step, min_t)};
}

Outcome Fig4() {
  bool ok = true;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ExperimentResult coarse = RunSweep(SweepPreset("fig4", seed));
    SweepSpec dense_spec = SweepPreset("fig4", seed);
    dense_spec.grid_min = 1.5;
    dense_spec.grid_max = 2.5;
    dense_spec.grid_count = 101;
    const ExperimentResult dense = RunSweep(dense_spec);
    const double step = coarse.GridStep();
    const double r = ValueAt(coarse, coarse.argmin_residual);
    const double t = ValueAt(coarse, coarse.argmin_trajectory);
    const double dr = ValueAt(dense, dense.argmin_residual);
    const double dt = ValueAt(dense, dense.argmin_trajectory);
    const bool seed_ok =
        std::abs(r - t) <= 2.0 * step + 1e-9 && std::abs(r - 2.0) <= 0.25 &&
        std::abs(t - 2.0) <= 0.25 && std::abs(dr - 2.0) <= 0.25 &&
        std::abs(dt - 2.0) <= 0.25 && std::abs(dr - r) <= step + 1e-9 &&
        std::abs(dt - t) <= step + 1e-9;
    ok = ok && seed_ok;
    detail << "seed " << seed << ": R " << r << " T " << t << " (dense " << dr
           << ", " << dt << ")" << (seed_ok ? "" : " FAILED") << "; ";
  }
  return {ok, detail.str()};
}

struct CollisionRun {
  CollisionReport report;
  std::string csv;
};

CollisionRun RunCollision() {
  CollisionRun run;
  run.report = RunCollisionEval(CollisionPreset());
  std::ostringstream out;
  WriteCollisionCsv(out, run.report);
  run.csv = out.str();
  return run;
}

CollisionRun* first_collision = nullptr;

Outcome Collision() {
  static CollisionRun run = RunCollision();
  first_collision = &run;
  const CollisionReport& r = run.report;
  const double delta_t_min = r.bilevel.trajectory_error.value_or(NAN);
  const double pins_r = r.residual_pins.residual.value_or(NAN);
  const double pins_t = r.residual_pins.trajectory_error.value_or(NAN);
  const double bounded_t = r.residual_bounded.trajectory_error.value_or(NAN);
  const double speedup = r.bilevel.seconds / r.residual_bounded.seconds;
  const bool b = bounded_t >= 12.6 / 5.0 && bounded_t <= 12.6 * 5.0;
  const bool c = delta_t_min <= 50.0;
  const bool d = speedup >= 50.0;
  // Warm start from the bounded residual estimate vs the standard start at
  // an equal iteration budget.
  const CollisionEvalConfig preset = CollisionPreset();
  const Trajectory gt =
      SynthesizeGt(preset.game, preset.truth_theta, preset.noise);
  PatternSearchConfig budget = preset.bilevel;
  budget.max_iterations = 10;
  double cold = NAN, warm = NAN;
  if (r.residual_bounded.theta) {
    cold = PatternSearch(preset.game, gt, budget).delta;
    ResidualSolution estimate;
    estimate.theta = *r.residual_bounded.theta;
    warm = RefineFromResidual(preset.game, gt, estimate, budget).solution.delta;
  }
  const bool e = warm <= cold;
  // Under the pins alone theta* is feasible, so delta_T(theta*) bounds that
  // problem's delta_T,min from above.
  const std::optional<TrajectoryError> at_truth =
      TrajectoryErrorOf(preset.game, preset.truth_theta, gt);
  const double pins_t_min = at_truth ? at_truth->total : NAN;
  const bool a = pins_r <= 1e-5 && pins_t >= 100.0 * pins_t_min;
  std::ostringstream detail;
  detail << "(a) delta_R,min " << pins_r << ", delta_T(theta_R) " << pins_t
         << " vs delta_T(theta*) " << pins_t_min << (a ? " ok" : " FAILED") << "; (b) bounded delta_T(theta_R) "
         << bounded_t << (b ? " ok" : " FAILED") << "; (c) delta_T,min "
         << delta_t_min << (c ? " ok" : " FAILED") << "; (d) residual "
         << r.residual_bounded.seconds << " s vs bi-level "
         << r.bilevel.seconds << " s, " << speedup << "x"
         << (d ? " ok" : " FAILED") << "; (e) 10-iteration warm start "
         << warm << " vs cold " << cold << (e ? " ok" : " FAILED");
  return {a && b && c && d && e, detail.str()};
}

Outcome Determinism() {
  bool ok = true;
  std::ostringstream detail;
  for (const std::string name : {"fig1", "fig2", "fig4"}) {
    const bool same = SweepCsv(RunSweep(SweepPreset(name, 1))) ==
                      SweepCsv(RunSweep(SweepPreset(name, 1)));
    ok = ok && same;
    detail << name << (same ? " identical" : " DIFFERS") << "; ";
  }
  if (first_collision == nullptr) {
    static CollisionRun run = RunCollision();
    first_collision = &run;
  }
  const bool same = RunCollision().csv == first_collision->csv;
  ok = ok && same;
  detail << "collision" << (same ? " identical" : " DIFFERS");
  return {ok, detail.str()};
}

}  // namespace
}  // namespace idg

int main() {
  using idg::Criterion;
  const std::vector<Criterion> criteria = {
      {"gradient suite", 10.0, idg::GradientSuite},
      {"forward-solver oracle", 30.0, idg::ForwardOracle},
      {"residual equivalence (quadratic form vs direct)", 60.0,
       idg::ResidualEquivalence},
      {"double-integrator weight recovery", 10.0, idg::WeightRecovery},
      {"sweep fig1 (trustworthy)", 300.0, idg::Fig1},
      {"sweep fig2 (reduced basis, not trustworthy)", 300.0, idg::Fig2},
      {"sweep fig4 (noise, approximately trustworthy)", 900.0, idg::Fig4},
      {"collision-game synthetic experiment", 1800.0, idg::Collision},
      {"QP oracle", 10.0, idg::QpOracle},
      {"determinism of presets", 3600.0, idg::Determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    idg::Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    const bool in_time = seconds < c.time_limit;
    const bool pass = outcome.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << outcome.detail
              << " [" << idg::Fmt("%.1f", seconds) << " s, limit "
              << idg::Fmt("%.0f", c.time_limit) << " s"
              << (in_time ? "" : ", TOO SLOW") << "]" << std::endl;
  }
  std::cout << (failures == 0 ? "ALL PASS" : "FAILURES: ")
            << (failures == 0 ? "" : std::to_string(failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}

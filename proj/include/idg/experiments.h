///////////////////////////////////////////////////////////////////////////////
//
// Experiment drivers: one-parameter sweeps comparing the residual error
// delta_R with the trajectory error delta_T on the double integrator, and the
// collision-avoidance evaluation comparing residual and bi-level
// identification.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_EXPERIMENTS_H
#define IDG_EXPERIMENTS_H

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/bilevel.h"
#include "idg/data_io.h"
#include "idg/metrics.h"
#include "idg/residual.h"

namespace idg {

struct SweepSpec {
  std::string name;
  // Game and weights that generate the ground truth.
  GameDefinition truth;
  ParameterVector truth_theta;
  // Game whose basis both errors are evaluated with, and its weights with
  // the free coordinate still to be overwritten.
  GameDefinition model;
  ParameterVector base_theta;
  int player = 0;
  int free_index = 0;
  double grid_min = 0.0;
  double grid_max = 1.0;
  int grid_count = 3;
  NoiseSpec noise;
  bool normalize = true;

  // Throws kInvalidArgument.
  void Validate() const;
  std::vector<double> GridValues() const;
};

// Named presets: "fig1" (full basis, exact ground truth, theta_2 sweep),
// "fig2" (reduced basis [u^2, x2^2], theta_3 sweep) and "fig4" (full basis,
// ground truth with sigma = 0.1 noise drawn from `seed`). Throws
// kInvalidArgument for unknown names.
SweepSpec SweepPreset(const std::string& name, std::uint64_t seed = 1);

struct SweepPoint {
  double value = 0.0;
  ParameterVector theta;
  std::optional<double> residual;  // delta_R
  std::optional<TrajectoryError> trajectory_error;
  std::string failure;  // why a value is missing
};

struct ExperimentResult {
  std::string name;
  std::uint64_t seed = 0;
  bool normalize = true;
  // psi*(0) of the pinned player, from the forward solve at theta*.
  Vector pinned_costate;
  std::vector<SweepPoint> points;
  std::optional<int> argmin_residual;
  std::optional<int> argmin_trajectory;

  std::vector<std::optional<double>> ResidualCurve() const;
  std::vector<std::optional<double>> TrajectoryCurve() const;
  double GridStep() const;
};

// delta_R = alpha^T P(0) alpha with alpha = [theta; psi*(0)] from one Riccati
// sweep along the ground truth; delta_T from a forward solve per grid point.
// Grid points run concurrently. Point failures are recorded, never thrown.
ExperimentResult RunSweep(const SweepSpec& spec);

// Indices of the `count` smallest present values, ascending by value.
std::vector<int> SmallestIndices(const std::vector<std::optional<double>>& v,
                                 int count);

// Columns: value, theta_1..theta_M, delta_R, delta_T_x, delta_T_u, delta_T,
// converged, delta_R_norm, delta_T_norm. Missing values are empty cells.
void WriteSweepCsv(std::ostream& out, const ExperimentResult& result);
nlohmann::json SweepResultToJson(const ExperimentResult& result);

struct CollisionEvalConfig {
  GameDefinition game;
  ParameterVector truth_theta;
  // Replaces the synthesized ground truth when set.
  std::optional<Trajectory> external_gt;
  NoiseSpec noise;
  ConstraintSpec pins_only;
  ConstraintSpec bounded;
  PatternSearchConfig bilevel;
};

// Synthetic protocol: x0 = [-1, -0.5, 1, 0], targets [1, 1, -1, 0], T = 5,
// theta*_1 = [1 4 0 0 0.2 0 100 100], theta*_2 = [1 1 0 0 0.2 0 100 100];
// pins theta_{i,1} = 1, bounds theta_{i,7}, theta_{i,8} >= 500. The
// bi-level search starts at ones with terminal weights 750, keeps the
// remaining weights >= 0 and polls cyclically with pattern moves, mesh
// scale <= 2 and a 1e-3 relative sufficient decrease.
CollisionEvalConfig CollisionPreset(std::uint64_t seed = 0);

struct StageReport {
  std::string name;
  std::optional<ParameterVector> theta;
  std::optional<double> residual;  // delta_R
  std::optional<double> trajectory_error;  // delta_T
  double seconds = 0.0;
  std::string failure;
};

struct CollisionReport {
  StageReport residual_pins;
  StageReport residual_bounded;
  StageReport bilevel;
  std::optional<BilevelSolution> bilevel_solution;
  std::vector<IdentifiabilityDiagnostics> diagnostics;  // pins-only run
};

// Runs both residual identifications and the bi-level search. Stage
// failures are recorded in the report.
CollisionReport RunCollisionEval(const CollisionEvalConfig& config);

// Columns: stage, delta_R, delta_T, theta_<player>_<index>...; timings are
// left to the JSON report.
void WriteCollisionCsv(std::ostream& out, const CollisionReport& report);
nlohmann::json CollisionReportToJson(const CollisionReport& report);

}  // namespace idg

#endif  // IDG_EXPERIMENTS_H

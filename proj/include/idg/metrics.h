///////////////////////////////////////////////////////////////////////////////
//
// Trajectory errors: normalized sums of absolute errors (NSAE) between a
// ground-truth trajectory and an estimate sampled on the same grid.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_METRICS_H
#define IDG_METRICS_H

#include <optional>
#include <vector>

#include "idg/forward_solver.h"
#include "idg/game_model.h"

namespace idg {

struct TrajectoryError {
  double state = 0.0;    // delta_T^x
  double control = 0.0;  // delta_T^u
  double total = 0.0;    // delta_T
  int samples = 0;       // K
};

// Each channel's absolute errors are summed over samples and divided by the
// channel's largest absolute GT sample (1 when that is zero). Both
// trajectories must share the grid and dimensions.
TrajectoryError Nsae(const Trajectory& gt, const Trajectory& est);

// Solves the game at `theta` with the multi-start protocol and returns the
// best candidate's error against `gt` (resampled to the solver grid first).
// Empty when no OLNE could be computed.
std::optional<TrajectoryError> TrajectoryErrorOf(
    const GameDefinition& game, const ParameterVector& theta,
    const Trajectory& gt, const ShootingOptions& options = {});

// Divides every present value by the largest present value.
std::vector<std::optional<double>> NormalizeByMax(
    const std::vector<std::optional<double>>& values);

}  // namespace idg

#endif  // IDG_METRICS_H

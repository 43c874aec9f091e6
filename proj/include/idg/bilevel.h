///////////////////////////////////////////////////////////////////////////////
//
// Direct (bi-level) identification: a generalized pattern search over the
// cost weights that minimizes the trajectory error delta_T(theta), with a
// forward OLNE solve per objective evaluation.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_BILEVEL_H
#define IDG_BILEVEL_H

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "idg/forward_solver.h"
#include "idg/metrics.h"
#include "idg/residual.h"

namespace idg {

enum class PollOrder {
  kFixed,     // stacked order, first improvement
  kCyclic,    // first improvement, resuming after the last accepted coordinate
  kComplete,  // every poll evaluated, best improvement
};

struct PatternSearchConfig {
  ParameterVector initial;
  // Stacked per-coordinate initial mesh; empty means 0.25 * max(|theta0_j|, 1).
  Vector initial_mesh;
  double expansion = 2.0;
  double contraction = 0.5;
  // Upper limit of mesh / initial mesh; expansion stops there.
  double max_mesh_scale = std::numeric_limits<double>::infinity();
  int max_iterations = 200;
  // Stops once every coordinate's mesh is at or below this value.
  double mesh_tolerance = 1e-3;
  ConstraintSpec constraints;
  PollOrder poll_order = PollOrder::kFixed;
  // A poll improves only if it lowers the objective by this fraction of
  // its current value.
  double min_decrease = 0.0;
  // At the end of every poll cycle, tries x + (x - anchor) where the anchor
  // is the incumbent at the end of the previous cycle. A cycle ends when a
  // poll round fails or, with cyclic polling, when the poll start wraps
  // around; with other orders every accepted poll ends one.
  bool pattern_moves = false;
  // Evaluates all polls of an iteration concurrently; acceptance still
  // follows the poll order.
  bool parallel_poll = false;
  ShootingOptions shooting;

  // Throws kInvalidArgument on inconsistent settings.
  void Validate() const;
};

struct TraceEntry {
  int iteration = 0;
  ParameterVector theta;
  double objective = 0.0;
  double mesh_scale = 1.0;  // current mesh / initial mesh
};

struct BilevelSolution {
  ParameterVector theta;   // theta^T
  double delta = 0.0;      // delta_T,min
  std::vector<TraceEntry> trace;  // start plus every accepted step
  int iterations = 0;
  int evaluations = 0;      // distinct objective evaluations
  int inner_converged = 0;
  int inner_failed = 0;
  bool mesh_converged = false;
};

// Objective evaluated at a feasible theta; nullopt means the inner solve
// failed and the point counts as +infinity.
using ObjectiveFunction =
    std::function<std::optional<double>(const ParameterVector&)>;

// Pattern search on an arbitrary objective. Polls +mesh_j then -mesh_j for
// every coordinate that is not pinned, in the order set by `poll_order`;
// polls below a bound are clipped to it. An improving poll is accepted and
// the mesh expands; a failed poll round contracts it. Throws kInfeasibleStart
// when the start violates the constraints or its objective fails.
BilevelSolution PatternSearch(const ObjectiveFunction& objective,
                              const PatternSearchConfig& config);

// delta_T(theta) = NSAE between `gt` and the selected OLNE at theta. Inner
// solves add the incumbent's psi(0) as the first shooting start; only the
// initial point may fall back to continuation. With
// parallel_poll, points evaluated ahead of an acceptance keep the start they
// were solved from, so traces can differ from sequential polling at the
// level of the shooting tolerance.
BilevelSolution PatternSearch(const GameDefinition& game, const Trajectory& gt,
                              const PatternSearchConfig& config);

struct RefinedSolution {
  ParameterVector warm_start;  // theta^R projected onto the constraints
  std::optional<double> warm_start_delta;
  BilevelSolution solution;
};

// Pattern search started at the residual estimate. `config.initial` is
// ignored.
RefinedSolution RefineFromResidual(const GameDefinition& game,
                                   const Trajectory& gt,
                                   const ResidualSolution& residual,
                                   const PatternSearchConfig& config);

// Applies the pins and clips to the bounds.
ParameterVector ProjectOntoConstraints(const ParameterVector& theta,
                                       const ConstraintSpec& constraints);

}  // namespace idg

#endif  // IDG_BILEVEL_H

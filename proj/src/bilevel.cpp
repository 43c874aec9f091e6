#include "idg/bilevel.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <string>

#include "idg/metrics.h"

namespace idg {
namespace {

struct StackedConstraints {
  std::vector<bool> pinned;
  Vector pin_value;
  Vector lower;
};

StackedConstraints Stack(const ConstraintSpec& spec,
                         const std::vector<int>& dims) {
  std::vector<int> offset(dims.size() + 1, 0);
  for (size_t i = 0; i < dims.size(); ++i) offset[i + 1] = offset[i] + dims[i];
  const int total = offset.back();
  StackedConstraints out;
  out.pinned.assign(total, false);
  out.pin_value = Vector::Zero(total);
  out.lower =
      Vector::Constant(total, -std::numeric_limits<double>::infinity());
  auto index_of = [&](int player, int index) {
    if (player < 0 || player >= static_cast<int>(dims.size()) || index < 0 ||
        index >= dims[player]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "constraint refers to player " + std::to_string(player) +
                      " index " + std::to_string(index) + " out of range");
    }
    return offset[player] + index;
  };
  for (const auto& pin : spec.pins) {
    const int k = index_of(pin.player, pin.index);
    out.pinned[k] = true;
    out.pin_value[k] = pin.value;
  }
  for (const auto& bound : spec.bounds) {
    const int k = index_of(bound.player, bound.index);
    out.lower[k] = std::max(out.lower[k], bound.lower);
  }
  return out;
}

using Key = std::vector<double>;

Key KeyOf(const Vector& v) { return Key(v.data(), v.data() + v.size()); }

using IncumbentCallback = std::function<void(const Vector&)>;

BilevelSolution Search(const ObjectiveFunction& objective,
                       const PatternSearchConfig& config,
                       const IncumbentCallback& on_incumbent);

}  // namespace

void PatternSearchConfig::Validate() const {
  if (!(expansion > 1.0) || !(contraction > 0.0 && contraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "pattern search needs expansion > 1 > contraction > 0");
  }
  if (!(min_decrease >= 0.0 && min_decrease < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "min_decrease must be in [0, 1)");
  }
  if (!(max_mesh_scale >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "max_mesh_scale must be >= 1");
  }
  if (max_iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  }
  if (!(mesh_tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mesh_tolerance must be > 0");
  }
  if (initial.num_players() == 0 || !initial.AllFinite()) {
    throw Error(ErrorCode::kInvalidArgument,
                "pattern search needs a finite initial theta");
  }
  const Vector stacked = initial.Stacked();
  if (initial_mesh.size() != 0 &&
      (initial_mesh.size() != stacked.size() ||
       (initial_mesh.array() <= 0.0).any() || !initial_mesh.allFinite())) {
    throw Error(ErrorCode::kInvalidArgument,
                "initial_mesh must be positive with one entry per weight");
  }
}

ParameterVector ProjectOntoConstraints(const ParameterVector& theta,
                                       const ConstraintSpec& constraints) {
  const std::vector<int> dims = theta.dims();
  const StackedConstraints c = Stack(constraints, dims);
  Vector x = theta.Stacked();
  for (int k = 0; k < x.size(); ++k) {
    if (c.pinned[k]) {
      x[k] = c.pin_value[k];
    } else {
      x[k] = std::max(x[k], c.lower[k]);
    }
  }
  return ParameterVector::FromStacked(x, dims);
}

namespace {

BilevelSolution Search(const ObjectiveFunction& objective,
                       const PatternSearchConfig& config,
                       const IncumbentCallback& on_incumbent) {
  config.Validate();
  const std::vector<int> dims = config.initial.dims();
  const StackedConstraints c = Stack(config.constraints, dims);
  Vector x = config.initial.Stacked();
  const int dim = static_cast<int>(x.size());
  for (int k = 0; k < dim; ++k) {
    if ((c.pinned[k] && x[k] != c.pin_value[k]) || x[k] < c.lower[k]) {
      throw Error(ErrorCode::kInfeasibleStart,
                  "initial theta violates the constraint on weight " +
                      std::to_string(k));
    }
  }
  Vector base_mesh(dim);
  for (int k = 0; k < dim; ++k) {
    base_mesh[k] = config.initial_mesh.size() != 0
                       ? config.initial_mesh[k]
                       : 0.25 * std::max(std::abs(x[k]), 1.0);
  }

  BilevelSolution out;
  std::map<Key, std::optional<double>> cache;
  auto record = [&](const Key& key, const std::optional<double>& value) {
    cache.emplace(key, value);
    ++out.evaluations;
    (value ? out.inner_converged : out.inner_failed) += 1;
  };
  auto evaluate = [&](const Vector& point) -> double {
    const Key key = KeyOf(point);
    auto it = cache.find(key);
    if (it == cache.end()) {
      record(key, objective(ParameterVector::FromStacked(point, dims)));
      it = cache.find(key);
    }
    return it->second ? *it->second : std::numeric_limits<double>::infinity();
  };

  double best = evaluate(x);
  if (!std::isfinite(best)) {
    throw Error(ErrorCode::kInfeasibleStart,
                "objective cannot be evaluated at the initial theta");
  }
  if (on_incumbent) on_incumbent(x);
  double scale = 1.0;
  out.trace.push_back({0, ParameterVector::FromStacked(x, dims), best, scale});

  auto prefetch = [&](const std::vector<Vector>& points) {
    if (!config.parallel_poll) return;
    std::vector<std::pair<Key, std::future<std::optional<double>>>> jobs;
    for (const Vector& p : points) {
      Key key = KeyOf(p);
      if (cache.count(key)) continue;
      const ParameterVector theta = ParameterVector::FromStacked(p, dims);
      jobs.emplace_back(std::move(key),
                        std::async(std::launch::async, [&objective, theta] {
                          return objective(theta);
                        }));
    }
    for (auto& [key, job] : jobs) record(key, job.get());
  };

  int first_coord = 0;
  Vector anchor = x;
  // Hooke-Jeeves move along the displacement over the last poll cycle.
  auto try_pattern_move = [&](int iter) {
    if (!config.pattern_moves || x == anchor) {
      anchor = x;
      return;
    }
    Vector p = 2.0 * x - anchor;
    for (int k = 0; k < dim; ++k) {
      p[k] = c.pinned[k] ? x[k] : std::max(p[k], c.lower[k]);
    }
    anchor = x;
    const double value = evaluate(p);
    if (value < best - config.min_decrease * std::abs(best)) {
      x = p;
      best = value;
      if (on_incumbent) on_incumbent(x);
      out.trace.push_back(
          {iter, ParameterVector::FromStacked(x, dims), best, scale});
    }
  };
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    out.iterations = iter;
    // +mesh_j then -mesh_j per coordinate, starting at first_coord.
    std::vector<Vector> polls;
    std::vector<int> poll_coord;
    for (int step = 0; step < dim; ++step) {
      const int k = (first_coord + step) % dim;
      if (c.pinned[k]) continue;
      for (double sign : {1.0, -1.0}) {
        Vector p = x;
        p[k] = std::max(x[k] + sign * scale * base_mesh[k], c.lower[k]);
        if (p[k] != x[k]) {
          polls.push_back(std::move(p));
          poll_coord.push_back(k);
        }
      }
    }
    prefetch(polls);
    bool improved = false;
    int accepted = -1;
    const double target = best - config.min_decrease * std::abs(best);
    for (size_t i = 0; i < polls.size(); ++i) {
      const double value = evaluate(polls[i]);
      if (value < target &&
          (config.poll_order != PollOrder::kComplete || accepted < 0 ||
           value < evaluate(polls[accepted]))) {
        accepted = static_cast<int>(i);
        if (config.poll_order != PollOrder::kComplete) break;
      }
    }
    bool wrapped = false;
    if (accepted >= 0) {
      x = polls[accepted];
      best = evaluate(x);
      improved = true;
      if (config.poll_order == PollOrder::kCyclic) {
        const int next = (poll_coord[accepted] + 1) % dim;
        wrapped = next <= first_coord;
        first_coord = next;
      } else {
        wrapped = true;
      }
    }
    if (improved) {
      if (on_incumbent) on_incumbent(x);
      scale = std::min(scale * config.expansion, config.max_mesh_scale);
      out.trace.push_back(
          {iter, ParameterVector::FromStacked(x, dims), best, scale});
      if (wrapped) try_pattern_move(iter);
      continue;
    }
    try_pattern_move(iter);
    scale *= config.contraction;
    bool converged = true;
    for (int k = 0; k < dim; ++k) {
      if (!c.pinned[k] && scale * base_mesh[k] > config.mesh_tolerance) {
        converged = false;
      }
    }
    if (converged) {
      out.mesh_converged = true;
      break;
    }
  }
  out.theta = ParameterVector::FromStacked(x, dims);
  out.delta = best;
  return out;
}

}  // namespace

BilevelSolution PatternSearch(const ObjectiveFunction& objective,
                              const PatternSearchConfig& config) {
  return Search(objective, config, {});
}

BilevelSolution PatternSearch(const GameDefinition& game, const Trajectory& gt,
                              const PatternSearchConfig& config) {
  game.CheckParameters(config.initial);
  const Trajectory aligned =
      gt.grid == game.grid() ? gt : gt.Resampled(game.grid());
  // psi(0) of every selected equilibrium; the incumbent's one seeds the
  // inner solves of the next poll round and replaces the continuation
  // fallback.
  std::mutex mutex;
  std::map<Key, Vector> costates;
  std::optional<CostateGuess> warm;
  const ObjectiveFunction objective =
      [&](const ParameterVector& theta) -> std::optional<double> {
    std::vector<CostateGuess> extra;
    ShootingOptions shooting = config.shooting;
    {
      std::lock_guard<std::mutex> lock(mutex);
      if (warm) {
        extra.push_back(*warm);
        shooting.continuation = false;
      }
    }
    try {
      const std::vector<OlneSolution> candidates =
          SolveOlneMultiStart(game, theta, extra, shooting);
      const OlneSolution& best = SelectBestOlne(candidates, aligned);
      {
        std::lock_guard<std::mutex> lock(mutex);
        costates[KeyOf(theta.Stacked())] = best.initial_costate;
      }
      return Nsae(aligned, best.trajectory).total;
    } catch (const Error& e) {
      // Weights outside the solvable domain (e.g. a non-positive control
      // weight) count as failed inner solves.
      if (e.code() == ErrorCode::kNoConvergence ||
          e.code() == ErrorCode::kInvalidArgument ||
          e.code() == ErrorCode::kNonFiniteState ||
          e.code() == ErrorCode::kDegenerateGeometry) {
        return std::nullopt;
      }
      throw;
    }
  };
  const IncumbentCallback on_incumbent = [&](const Vector& x) {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = costates.find(KeyOf(x));
    if (it != costates.end()) warm = CostateGuess{"incumbent", it->second};
  };
  return Search(objective, config, on_incumbent);
}

RefinedSolution RefineFromResidual(const GameDefinition& game,
                                   const Trajectory& gt,
                                   const ResidualSolution& residual,
                                   const PatternSearchConfig& config) {
  RefinedSolution out;
  out.warm_start = ProjectOntoConstraints(residual.theta, config.constraints);
  PatternSearchConfig warm = config;
  warm.initial = out.warm_start;
  out.solution = PatternSearch(game, gt, warm);
  out.warm_start_delta = out.solution.trace.front().objective;
  return out;
}

}  // namespace idg

#include "idg/metrics.h"

#include <algorithm>
#include <cmath>

namespace idg {
namespace {

double ChannelError(const std::vector<Vector>& gt,
                    const std::vector<Vector>& est, int j) {
  double scale = 0.0;
  double sum = 0.0;
  for (size_t k = 0; k < gt.size(); ++k) {
    scale = std::max(scale, std::abs(gt[k][j]));
    sum += std::abs(gt[k][j] - est[k][j]);
  }
  return sum / (scale > 0.0 ? scale : 1.0);
}

}  // namespace

TrajectoryError Nsae(const Trajectory& gt, const Trajectory& est) {
  gt.Validate();
  est.Validate();
  if (gt.size() != est.size() || gt.states[0].size() != est.states[0].size() ||
      gt.controls[0].size() != est.controls[0].size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "NSAE needs trajectories with matching samples and dimensions");
  }
  TrajectoryError out;
  out.samples = gt.size();
  for (int j = 0; j < gt.states[0].size(); ++j) {
    out.state += ChannelError(gt.states, est.states, j);
  }
  for (int j = 0; j < gt.controls[0].size(); ++j) {
    out.control += ChannelError(gt.controls, est.controls, j);
  }
  out.total = out.state + out.control;
  return out;
}

std::optional<TrajectoryError> TrajectoryErrorOf(const GameDefinition& game,
                                                 const ParameterVector& theta,
                                                 const Trajectory& gt,
                                                 const ShootingOptions& options) {
  const Trajectory aligned =
      gt.grid == game.grid() ? gt : gt.Resampled(game.grid());
  std::vector<OlneSolution> candidates;
  try {
    candidates = SolveOlneMultiStart(game, theta, {}, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNoConvergence) return std::nullopt;
    throw;
  }
  return Nsae(aligned, SelectBestOlne(candidates, aligned).trajectory);
}

std::vector<std::optional<double>> NormalizeByMax(
    const std::vector<std::optional<double>>& values) {
  double peak = 0.0;
  for (const auto& v : values) {
    if (v) peak = std::max(peak, *v);
  }
  std::vector<std::optional<double>> out(values.size());
  for (size_t k = 0; k < values.size(); ++k) {
    if (values[k]) out[k] = peak > 0.0 ? *values[k] / peak : 0.0;
  }
  return out;
}

}  // namespace idg

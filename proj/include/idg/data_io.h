///////////////////////////////////////////////////////////////////////////////
//
// Trajectory ingestion and preprocessing, synthetic ground truth, and the
// on-disk formats (trajectory CSV, versioned JSON documents).
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_DATA_IO_H
#define IDG_DATA_IO_H

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idg/bilevel.h"
#include "idg/forward_solver.h"
#include "idg/game_model.h"
#include "idg/residual.h"

namespace idg {

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

// Position samples at (nominally 50 Hz) timestamps; no control channel.
struct RawRecording {
  std::vector<double> times;
  std::vector<Vector> positions;  // one per timestamp

  // Throws kInvalidArgument unless timestamps are finite and strictly
  // increasing with one position sample each.
  void Validate() const;
};

// Natural cubic smoothing spline minimizing
//   sum_k (y_k - g(t_k))^2 + lambda * int g''(t)^2 dt.
class SmoothingSpline {
 public:
  // Fits with the given lambda (>= 0), or picks lambda by generalized
  // cross-validation when it is absent. Throws kTooFewSamples below 4
  // samples.
  SmoothingSpline(const std::vector<double>& t, const Vector& y,
                  std::optional<double> lambda = std::nullopt);

  double lambda() const { return lambda_; }
  // Evaluation is clamped to the knot range.
  double Value(double t) const;
  double Derivative(double t) const;
  const Vector& fitted() const { return g_; }

 private:
  int Interval(double t) const;

  std::vector<double> t_;
  Vector g_;      // fitted values at the knots
  Vector gamma_;  // second derivatives at the knots
  double lambda_ = 0.0;
};

// Smooths each position channel, differentiates it analytically for the
// controls and samples both on a uniform grid of step `dt` starting at the
// first timestamp. `smoothing` as for SmoothingSpline.
Trajectory DifferentiateAndSmooth(const RawRecording& rec,
                                  std::optional<double> smoothing,
                                  double dt = 0.01);

struct WindowOptions {
  double v_start = 0.15;  // [m/s]
  double v_stop = 0.10;   // [m/s]
  // Optional containment check at T: robot i must lie inside an axis-aligned
  // rectangle of the given size centered at targets[2i..2i+1].
  std::optional<Vector> targets;
  double rect_width = 0.33;
  double rect_height = 0.31;
};

struct TrialWindow {
  double t0 = 0.0;
  double t_end = 0.0;
  bool valid = false;
  std::string reason;  // empty when valid
};

// t0: first time any robot's speed exceeds v_start. T: first time >= t0 at
// which every robot is below v_stop. `control_dims` gives each robot's
// control block size (blocks are contiguous).
TrialWindow DetectWindow(const Trajectory& traj,
                         const std::vector<int>& control_dims,
                         const WindowOptions& options = {});

// Samples inside [t0, T], re-timed to start at zero.
Trajectory TrimToWindow(const Trajectory& traj, const TrialWindow& window);

struct NoiseSpec {
  double sigma_x = 0.0;
  double sigma_u = 0.0;
  std::uint64_t seed = 0;
};

// Adds i.i.d. N(0, sigma^2) to every state and control sample. Samples are
// drawn grid point by grid point, states before controls.
Trajectory AddNoise(const Trajectory& traj, const NoiseSpec& noise);

// OLNE at theta (first converged start of the multi-start protocol) with
// noise added. Throws kNoConvergence.
Trajectory SynthesizeGt(const GameDefinition& game,
                        const ParameterVector& theta, const NoiseSpec& noise,
                        const ShootingOptions& options = {});

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kSchemaVersion = 1;

// Columns t, x_1..x_n, u_1..u_m; 17 significant digits. The reader needs a
// uniform time column.
void WriteTrajectoryCsv(std::ostream& out, const Trajectory& traj);
Trajectory ReadTrajectoryCsv(std::istream& in);
void WriteTrajectoryCsv(const std::string& path, const Trajectory& traj);
Trajectory ReadTrajectoryCsv(const std::string& path);

// Columns t, x_1..x_n (positions only, any strictly increasing times).
void WriteRawRecordingCsv(std::ostream& out, const RawRecording& rec);
RawRecording ReadRawRecordingCsv(std::istream& in);
RawRecording ReadRawRecordingCsv(const std::string& path);

nlohmann::json GameToJson(const GameDefinition& game);
// Accepts the full form written by GameToJson and a short form naming a
// built-in family ("double_integrator", "collision").
GameDefinition GameFromJson(const nlohmann::json& j);

nlohmann::json ThetaToJson(const ParameterVector& theta);
ParameterVector ThetaFromJson(const nlohmann::json& j);

nlohmann::json ConstraintsToJson(const ConstraintSpec& spec);
ConstraintSpec ConstraintsFromJson(const nlohmann::json& j);

nlohmann::json NoiseToJson(const NoiseSpec& noise);
NoiseSpec NoiseFromJson(const nlohmann::json& j);

nlohmann::json PatternSearchConfigToJson(const PatternSearchConfig& config);
// `initial` is read when present.
PatternSearchConfig PatternSearchConfigFromJson(const nlohmann::json& j);

nlohmann::json ResidualSolutionToJson(const ResidualSolution& sol);
ResidualSolution ResidualSolutionFromJson(const nlohmann::json& j);
nlohmann::json DiagnosticsToJson(const IdentifiabilityDiagnostics& d);
nlohmann::json BilevelSolutionToJson(const BilevelSolution& sol);
BilevelSolution BilevelSolutionFromJson(const nlohmann::json& j);
nlohmann::json WindowToJson(const TrialWindow& window);
nlohmann::json OlneReportToJson(const OlneSolution& sol);

// Trace columns: iteration, objective, mesh_scale, theta_<player>_<index>...
void WriteTraceCsv(std::ostream& out, const std::vector<TraceEntry>& trace);
// Square matrix dump, one row per line.
void WriteMatrixCsv(std::ostream& out, const Matrix& m);

// Throws kIoError / kParseError.
nlohmann::json ReadJsonFile(const std::string& path);
void WriteJsonFile(const std::string& path, const nlohmann::json& j);
void WriteTextFile(const std::string& path, const std::string& content);

// Checks "schema" and "version" fields. Throws kParseError.
void CheckSchema(const nlohmann::json& j, const std::string& schema);

}  // namespace idg

#endif  // IDG_DATA_IO_H

#include "idg/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <ostream>
#include <thread>

namespace idg {
namespace {

constexpr double kDiHorizon = 6.0;

Vector DiStart() { return Eigen::Vector2d(1.0, -1.0); }

ParameterVector DiTheta() {
  return ParameterVector({Vector(Eigen::Vector3d(1.0, 2.0, 1.0))});
}

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// Stage failures that leave a value missing instead of aborting.
bool Recoverable(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kNoConvergence:
    case ErrorCode::kNoConvergedCandidate:
    case ErrorCode::kNonFiniteState:
    case ErrorCode::kDegenerateGeometry:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInfeasibleConstraints:
    case ErrorCode::kUnboundedOrDegenerate:
    case ErrorCode::kInfeasibleStart:
      return true;
    default:
      return false;
  }
}

std::optional<int> ArgMin(const std::vector<std::optional<double>>& v) {
  std::optional<int> best;
  for (int k = 0; k < static_cast<int>(v.size()); ++k) {
    if (v[k] && (!best || *v[k] < *v[*best])) best = k;
  }
  return best;
}

void WriteCell(std::ostream& out, const std::optional<double>& v) {
  if (v) out << *v;
}

nlohmann::json OptionalJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json OptionalIndexJson(const std::optional<int>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

SweepPoint EvaluatePoint(const SweepSpec& spec, const RiccatiAssembly* assembly,
                         const Vector& psi0, const Trajectory& gt,
                         double value) {
  SweepPoint point;
  point.value = value;
  point.theta = spec.base_theta;
  point.theta.player(spec.player)[spec.free_index] = value;
  if (assembly != nullptr) {
    Vector alpha(assembly->size());
    alpha << point.theta.player(spec.player), psi0;
    point.residual = QuadraticResidual(*assembly, alpha);
  }
  try {
    point.trajectory_error = TrajectoryErrorOf(spec.model, point.theta, gt);
    if (!point.trajectory_error) point.failure = "no converged OLNE";
  } catch (const Error& e) {
    if (!Recoverable(e)) throw;
    point.failure = e.what();
  }
  return point;
}

StageReport ResidualStage(const std::string& name, const GameDefinition& game,
                          const Trajectory& gt,
                          const ConstraintSpec& constraints,
                          std::vector<IdentifiabilityDiagnostics>* diagnostics) {
  StageReport stage;
  stage.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::vector<RiccatiAssembly> assemblies;
    for (int i = 0; i < game.num_players(); ++i) {
      assemblies.push_back(RiccatiBackward(game, gt, i));
    }
    const ResidualSolution sol = SolveResidualQp(assemblies, constraints);
    stage.seconds = Seconds(start);
    stage.theta = sol.theta;
    stage.residual = sol.delta;
    if (diagnostics != nullptr) {
      for (const RiccatiAssembly& a : assemblies) {
        diagnostics->push_back(DiagnoseIdentifiability(a));
      }
    }
  } catch (const Error& e) {
    if (!Recoverable(e)) throw;
    stage.seconds = Seconds(start);
    stage.failure = e.what();
    return stage;
  }
  try {
    const auto error = TrajectoryErrorOf(game, *stage.theta, gt);
    if (error) {
      stage.trajectory_error = error->total;
    } else {
      stage.failure = "no converged OLNE at the identified weights";
    }
  } catch (const Error& e) {
    if (!Recoverable(e)) throw;
    stage.failure = e.what();
  }
  return stage;
}

nlohmann::json StageToJson(const StageReport& s) {
  nlohmann::json j = {{"name", s.name},
                      {"delta_R", OptionalJson(s.residual)},
                      {"delta_T", OptionalJson(s.trajectory_error)},
                      {"seconds", s.seconds},
                      {"failure", s.failure}};
  j["theta"] = s.theta ? ThetaToJson(*s.theta) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

void SweepSpec::Validate() const {
  if (grid_count < 3) {
    throw Error(ErrorCode::kInvalidArgument, "sweep grid needs >= 3 points");
  }
  if (!(grid_max > grid_min)) {
    throw Error(ErrorCode::kInvalidArgument, "sweep grid needs min < max");
  }
  truth.CheckParameters(truth_theta);
  model.CheckParameters(base_theta);
  if (player < 0 || player >= model.num_players() || free_index < 0 ||
      free_index >= model.basis_dim(player)) {
    throw Error(ErrorCode::kInvalidArgument,
                "sweep coordinate out of range for the model basis");
  }
  if (model.state_dim() != truth.state_dim() ||
      model.num_players() != truth.num_players() ||
      !(model.grid() == truth.grid())) {
    throw Error(ErrorCode::kInvalidArgument,
                "sweep model and truth games must share dynamics and grid");
  }
  if (noise.sigma_x < 0.0 || noise.sigma_u < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  }
}

std::vector<double> SweepSpec::GridValues() const {
  std::vector<double> out(grid_count);
  const double step = (grid_max - grid_min) / (grid_count - 1);
  for (int k = 0; k < grid_count; ++k) out[k] = grid_min + k * step;
  out.back() = grid_max;
  return out;
}

SweepSpec SweepPreset(const std::string& name, std::uint64_t seed) {
  const GameDefinition full =
      MakeDoubleIntegrator(kDiHorizon, DiStart(), DoubleIntegratorBasis::kFull);
  if (name == "fig1" || name == "fig4") {
    SweepSpec spec{.name = name,
                   .truth = full,
                   .truth_theta = DiTheta(),
                   .model = full,
                   .base_theta = DiTheta(),
                   .player = 0,
                   .free_index = 1,
                   .grid_min = 0.5,
                   .grid_max = 4.0,
                   .grid_count = 36,
                   .noise = {}};
    if (name == "fig4") spec.noise = NoiseSpec{0.1, 0.1, seed};
    return spec;
  }
  if (name == "fig2") {
    return SweepSpec{
        .name = name,
        .truth = full,
        .truth_theta = DiTheta(),
        .model = MakeDoubleIntegrator(kDiHorizon, DiStart(),
                                      DoubleIntegratorBasis::kReduced),
        .base_theta = ParameterVector({Vector(Eigen::Vector2d(1.0, 1.0))}),
        .player = 0,
        .free_index = 1,
        .grid_min = 0.25,
        .grid_max = 5.0,
        .grid_count = 20,
        .noise = {}};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown sweep preset '" + name +
                                               "' (fig1, fig2, fig4)");
}

std::vector<std::optional<double>> ExperimentResult::ResidualCurve() const {
  std::vector<std::optional<double>> out;
  for (const SweepPoint& p : points) out.push_back(p.residual);
  return out;
}

std::vector<std::optional<double>> ExperimentResult::TrajectoryCurve() const {
  std::vector<std::optional<double>> out;
  for (const SweepPoint& p : points) {
    out.push_back(p.trajectory_error
                      ? std::optional<double>(p.trajectory_error->total)
                      : std::nullopt);
  }
  return out;
}

double ExperimentResult::GridStep() const {
  if (points.size() < 2) return 0.0;
  return (points.back().value - points.front().value) /
         static_cast<double>(points.size() - 1);
}

ExperimentResult RunSweep(const SweepSpec& spec) {
  spec.Validate();
  ExperimentResult result;
  result.name = spec.name;
  result.seed = spec.noise.seed;
  result.normalize = spec.normalize;

  const OlneSolution truth_solution =
      SolveOlneMultiStart(spec.truth, spec.truth_theta).front();
  const int n = spec.truth.state_dim();
  result.pinned_costate =
      truth_solution.initial_costate.segment(spec.player * n, n);
  const Trajectory gt = AddNoise(truth_solution.trajectory, spec.noise);

  std::optional<RiccatiAssembly> assembly;
  std::string riccati_failure;
  try {
    assembly = RiccatiBackward(spec.model, gt, spec.player);
  } catch (const Error& e) {
    if (!Recoverable(e)) throw;
    riccati_failure = e.what();
  }
  const RiccatiAssembly* a = assembly ? &*assembly : nullptr;

  const std::vector<double> values = spec.GridValues();
  const int workers =
      std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  result.points.resize(values.size());
  for (size_t begin = 0; begin < values.size(); begin += workers) {
    const size_t end = std::min(values.size(), begin + workers);
    std::vector<std::future<SweepPoint>> jobs;
    for (size_t k = begin; k < end; ++k) {
      jobs.push_back(std::async(std::launch::async, [&, k] {
        return EvaluatePoint(spec, a, result.pinned_costate, gt, values[k]);
      }));
    }
    for (size_t k = begin; k < end; ++k) {
      result.points[k] = jobs[k - begin].get();
      if (!a && result.points[k].failure.empty()) {
        result.points[k].failure = riccati_failure;
      }
    }
  }
  result.argmin_residual = ArgMin(result.ResidualCurve());
  result.argmin_trajectory = ArgMin(result.TrajectoryCurve());
  return result;
}

std::vector<int> SmallestIndices(const std::vector<std::optional<double>>& v,
                                 int count) {
  std::vector<int> present;
  for (int k = 0; k < static_cast<int>(v.size()); ++k) {
    if (v[k]) present.push_back(k);
  }
  std::stable_sort(present.begin(), present.end(),
                   [&v](int a, int b) { return *v[a] < *v[b]; });
  if (static_cast<int>(present.size()) > count) present.resize(count);
  return present;
}

void WriteSweepCsv(std::ostream& out, const ExperimentResult& result) {
  const auto old = out.precision(17);
  const int dim = result.points.empty()
                      ? 0
                      : static_cast<int>(result.points.front().theta.Stacked().size());
  out << "value";
  for (int k = 1; k <= dim; ++k) out << ",theta_" << k;
  out << ",delta_R,delta_T_x,delta_T_u,delta_T,converged,delta_R_norm,"
         "delta_T_norm\n";
  const auto r = result.ResidualCurve();
  const auto t = result.TrajectoryCurve();
  const auto r_norm = result.normalize ? NormalizeByMax(r) : r;
  const auto t_norm = result.normalize ? NormalizeByMax(t) : t;
  for (size_t k = 0; k < result.points.size(); ++k) {
    const SweepPoint& p = result.points[k];
    out << p.value;
    const Vector theta = p.theta.Stacked();
    for (int j = 0; j < theta.size(); ++j) out << ',' << theta[j];
    out << ',';
    WriteCell(out, p.residual);
    const auto& e = p.trajectory_error;
    out << ',';
    WriteCell(out, e ? std::optional<double>(e->state) : std::nullopt);
    out << ',';
    WriteCell(out, e ? std::optional<double>(e->control) : std::nullopt);
    out << ',';
    WriteCell(out, e ? std::optional<double>(e->total) : std::nullopt);
    out << ',' << (e ? 1 : 0) << ',';
    WriteCell(out, r_norm[k]);
    out << ',';
    WriteCell(out, t_norm[k]);
    out << '\n';
  }
  out.precision(old);
}

nlohmann::json SweepResultToJson(const ExperimentResult& result) {
  const auto r = result.ResidualCurve();
  const auto t = result.TrajectoryCurve();
  auto value_at = [&result](const std::optional<int>& k) {
    return k ? nlohmann::json(result.points[*k].value)
             : nlohmann::json(nullptr);
  };
  nlohmann::json failures = nlohmann::json::array();
  for (size_t k = 0; k < result.points.size(); ++k) {
    if (!result.points[k].failure.empty()) {
      failures.push_back({{"index", k}, {"reason", result.points[k].failure}});
    }
  }
  std::vector<double> psi(result.pinned_costate.data(),
                          result.pinned_costate.data() +
                              result.pinned_costate.size());
  return {{"schema", "idg.sweep_result"},
          {"version", kSchemaVersion},
          {"name", result.name},
          {"seed", result.seed},
          {"normalized", result.normalize},
          {"grid",
           {{"min", result.points.front().value},
            {"max", result.points.back().value},
            {"count", result.points.size()},
            {"step", result.GridStep()}}},
          {"pinned_costate", psi},
          {"argmin_delta_R", OptionalIndexJson(result.argmin_residual)},
          {"argmin_delta_T", OptionalIndexJson(result.argmin_trajectory)},
          {"theta_hat_R", value_at(result.argmin_residual)},
          {"theta_hat_T", value_at(result.argmin_trajectory)},
          {"smallest_delta_R", SmallestIndices(r, 10)},
          {"smallest_delta_T", SmallestIndices(t, 10)},
          {"failures", failures}};
}

CollisionEvalConfig CollisionPreset(std::uint64_t seed) {
  Vector theta1(8), theta2(8);
  theta1 << 1.0, 4.0, 0.0, 0.0, 0.2, 0.0, 100.0, 100.0;
  theta2 << 1.0, 1.0, 0.0, 0.0, 0.2, 0.0, 100.0, 100.0;
  const ConstraintSpec pins = ConstraintSpec::PinFirstWeights(2);
  const ConstraintSpec bounded = pins.WithLowerBounds({6, 7}, 500.0, 2);
  Vector start = Vector::Ones(8);
  start[6] = start[7] = 750.0;
  PatternSearchConfig search;
  search.initial = ParameterVector({start, start});
  search.constraints = bounded.WithLowerBounds({1, 2, 3, 4, 5}, 0.0, 2);
  search.poll_order = PollOrder::kCyclic;
  search.max_mesh_scale = 2.0;
  search.min_decrease = 1e-3;
  search.pattern_moves = true;
  return CollisionEvalConfig{
      .game = MakeCollisionGame(5.0, Eigen::Vector4d(-1.0, -0.5, 1.0, 0.0),
                                Eigen::Vector4d(1.0, 1.0, -1.0, 0.0)),
      .truth_theta = ParameterVector({theta1, theta2}),
      .external_gt = std::nullopt,
      .noise = NoiseSpec{0.0, 0.0, seed},
      .pins_only = pins,
      .bounded = bounded,
      .bilevel = search};
}

CollisionReport RunCollisionEval(const CollisionEvalConfig& config) {
  const Trajectory gt =
      config.external_gt
          ? *config.external_gt
          : SynthesizeGt(config.game, config.truth_theta, config.noise);
  CollisionReport report;
  report.residual_pins = ResidualStage("residual_pins", config.game, gt,
                                       config.pins_only, &report.diagnostics);
  report.residual_bounded = ResidualStage("residual_bounded", config.game, gt,
                                          config.bounded, nullptr);
  report.bilevel.name = "bilevel";
  const auto start = std::chrono::steady_clock::now();
  try {
    report.bilevel_solution = PatternSearch(config.game, gt, config.bilevel);
    report.bilevel.theta = report.bilevel_solution->theta;
    report.bilevel.trajectory_error = report.bilevel_solution->delta;
  } catch (const Error& e) {
    if (!Recoverable(e)) throw;
    report.bilevel.failure = e.what();
  }
  report.bilevel.seconds = Seconds(start);
  return report;
}

void WriteCollisionCsv(std::ostream& out, const CollisionReport& report) {
  const auto old = out.precision(17);
  const StageReport* stages[] = {&report.residual_pins,
                                 &report.residual_bounded, &report.bilevel};
  std::vector<int> dims;
  for (const StageReport* s : stages) {
    if (s->theta) dims = s->theta->dims();
  }
  out << "stage,delta_R,delta_T";
  for (size_t i = 0; i < dims.size(); ++i) {
    for (int k = 1; k <= dims[i]; ++k) out << ",theta_" << i + 1 << '_' << k;
  }
  out << '\n';
  const int total = std::accumulate(dims.begin(), dims.end(), 0);
  for (const StageReport* s : stages) {
    out << s->name << ',';
    WriteCell(out, s->residual);
    out << ',';
    WriteCell(out, s->trajectory_error);
    const Vector theta = s->theta ? s->theta->Stacked() : Vector();
    for (int k = 0; k < total; ++k) {
      out << ',';
      if (theta.size() == total) out << theta[k];
    }
    out << '\n';
  }
  out.precision(old);
}

nlohmann::json CollisionReportToJson(const CollisionReport& report) {
  nlohmann::json j = {{"schema", "idg.collision_report"},
                      {"version", kSchemaVersion},
                      {"residual_pins", StageToJson(report.residual_pins)},
                      {"residual_bounded", StageToJson(report.residual_bounded)},
                      {"bilevel", StageToJson(report.bilevel)}};
  const double residual_seconds = report.residual_bounded.seconds;
  j["speedup"] = residual_seconds > 0.0
                     ? nlohmann::json(report.bilevel.seconds / residual_seconds)
                     : nlohmann::json(nullptr);
  nlohmann::json diagnostics = nlohmann::json::array();
  for (const auto& d : report.diagnostics) {
    diagnostics.push_back(DiagnosticsToJson(d));
  }
  j["diagnostics"] = diagnostics;
  if (report.bilevel_solution) {
    j["bilevel_solution"] = BilevelSolutionToJson(*report.bilevel_solution);
  }
  return j;
}

}  // namespace idg

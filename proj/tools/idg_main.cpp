// Command-line front end: forward solves, residual and bi-level
// identification, experiment presets and recording preprocessing.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idg/experiments.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitFailure = 1;
constexpr int kExitIncomplete = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

std::string DefaultOutDir() {
  const char* env = std::getenv("IDG_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

fs::path OutPath(const CommonOptions& common, const std::string& name) {
  fs::create_directories(common.out);
  return fs::path(common.out) / name;
}

void AddCommon(CLI::App* app, CommonOptions* common, bool config_required) {
  auto* config = app->add_option("--config", common->config, "JSON input");
  if (config_required) config->required()->check(CLI::ExistingFile);
  app->add_option("--seed", common->seed, "Random seed (u64)");
  app->add_option("--out", common->out,
                  "Output directory (default $IDG_OUT_DIR or .)");
}

void WriteText(const fs::path& path, const std::string& text) {
  idg::WriteTextFile(path.string(), text);
  std::cout << "wrote " << path.string() << '\n';
}

void WriteJson(const fs::path& path, const nlohmann::json& j) {
  idg::WriteJsonFile(path.string(), j);
  std::cout << "wrote " << path.string() << '\n';
}

std::string TrajectoryText(const idg::Trajectory& traj) {
  std::ostringstream out;
  idg::WriteTrajectoryCsv(out, traj);
  return out.str();
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

int RunForward(const CommonOptions& common, const std::string& theta_path,
               const std::string& noise_path) {
  const idg::GameDefinition game =
      idg::GameFromJson(idg::ReadJsonFile(common.config));
  const idg::ParameterVector theta =
      idg::ThetaFromJson(idg::ReadJsonFile(theta_path));
  idg::NoiseSpec noise;
  if (!noise_path.empty()) {
    noise = idg::NoiseFromJson(idg::ReadJsonFile(noise_path));
  }
  if (common.seed) noise.seed = *common.seed;
  std::vector<idg::OlneSolution> candidates;
  try {
    candidates = idg::SolveOlneMultiStart(game, theta);
  } catch (const idg::Error& e) {
    if (e.code() != idg::ErrorCode::kNoConvergence) throw;
    std::cerr << "forward: " << e.what() << '\n';
    return kExitIncomplete;
  }
  const idg::OlneSolution& solution = candidates.front();
  WriteText(OutPath(common, "trajectory.csv"),
            TrajectoryText(idg::AddNoise(solution.trajectory, noise)));
  nlohmann::json report = idg::OlneReportToJson(solution);
  nlohmann::json starts = nlohmann::json::array();
  for (const idg::OlneSolution& c : candidates) {
    starts.push_back({{"start", c.start_label},
                      {"converged", c.converged},
                      {"shooting_residual", c.shooting_residual},
                      {"iterations", c.iterations}});
  }
  report["starts"] = starts;
  report["noise"] = idg::NoiseToJson(noise);
  WriteJson(OutPath(common, "forward_report.json"), report);
  return 0;
}

int RunResidual(const CommonOptions& common, const std::string& gt_path,
                const std::string& constraints_path, bool dump_p0) {
  const idg::GameDefinition game =
      idg::GameFromJson(idg::ReadJsonFile(common.config));
  const idg::Trajectory gt = idg::ReadTrajectoryCsv(gt_path);
  const idg::ConstraintSpec constraints =
      constraints_path.empty()
          ? idg::ConstraintSpec::PinFirstWeights(game.num_players())
          : idg::ConstraintsFromJson(idg::ReadJsonFile(constraints_path));
  std::vector<idg::RiccatiAssembly> assemblies;
  for (int i = 0; i < game.num_players(); ++i) {
    assemblies.push_back(idg::RiccatiBackward(game, gt, i));
  }
  const idg::ResidualSolution sol = idg::SolveResidualQp(assemblies, constraints);
  WriteJson(OutPath(common, "theta_residual.json"), idg::ThetaToJson(sol.theta));
  WriteJson(OutPath(common, "residual.json"), idg::ResidualSolutionToJson(sol));
  nlohmann::json diagnostics = nlohmann::json::array();
  for (const idg::RiccatiAssembly& a : assemblies) {
    diagnostics.push_back(
        idg::DiagnosticsToJson(idg::DiagnoseIdentifiability(a)));
  }
  WriteJson(OutPath(common, "diagnostics.json"), diagnostics);
  if (dump_p0) {
    for (const idg::RiccatiAssembly& a : assemblies) {
      std::ostringstream out;
      idg::WriteMatrixCsv(out, a.p0());
      WriteText(OutPath(common, "p0_player_" + std::to_string(a.player + 1) +
                                    ".csv"),
                out.str());
    }
  }
  std::cout << "delta_R " << sol.delta << '\n';
  return 0;
}

int RunBilevel(const CommonOptions& common, const std::string& gt_path,
               const std::string& search_path) {
  const idg::GameDefinition game =
      idg::GameFromJson(idg::ReadJsonFile(common.config));
  const idg::Trajectory gt = idg::ReadTrajectoryCsv(gt_path);
  const idg::PatternSearchConfig config =
      idg::PatternSearchConfigFromJson(idg::ReadJsonFile(search_path));
  const idg::BilevelSolution sol = idg::PatternSearch(game, gt, config);
  WriteJson(OutPath(common, "theta_bilevel.json"), idg::ThetaToJson(sol.theta));
  WriteJson(OutPath(common, "bilevel.json"), idg::BilevelSolutionToJson(sol));
  std::ostringstream trace;
  idg::WriteTraceCsv(trace, sol.trace);
  WriteText(OutPath(common, "trace.csv"), trace.str());
  std::cout << "delta_T " << sol.delta << '\n';
  return 0;
}

int RunSweepCommand(const CommonOptions& common, const std::string& preset) {
  idg::SweepSpec spec = idg::SweepPreset(preset, common.seed.value_or(1));
  if (!common.config.empty()) {
    const nlohmann::json j = idg::ReadJsonFile(common.config);
    idg::CheckSchema(j, "idg.sweep");
    spec.grid_min = j.value("grid_min", spec.grid_min);
    spec.grid_max = j.value("grid_max", spec.grid_max);
    spec.grid_count = j.value("grid_count", spec.grid_count);
    spec.normalize = j.value("normalize", spec.normalize);
    if (j.contains("noise")) spec.noise = idg::NoiseFromJson(j.at("noise"));
    if (common.seed) spec.noise.seed = *common.seed;
  }
  const idg::ExperimentResult result = idg::RunSweep(spec);
  std::ostringstream csv;
  idg::WriteSweepCsv(csv, result);
  WriteText(OutPath(common, "sweep_" + spec.name + ".csv"), csv.str());
  WriteJson(OutPath(common, "sweep_" + spec.name + ".json"),
            idg::SweepResultToJson(result));
  auto value_at = [&result](const std::optional<int>& k) {
    return k ? std::to_string(result.points[*k].value) : std::string("-");
  };
  std::cout << "argmin delta_R " << value_at(result.argmin_residual)
            << ", argmin delta_T " << value_at(result.argmin_trajectory)
            << '\n';
  return 0;
}

int RunCollisionCommand(const CommonOptions& common, const std::string& preset) {
  if (preset != "collision") {
    throw idg::Error(idg::ErrorCode::kInvalidArgument,
                     "unknown collision preset '" + preset + "'");
  }
  idg::CollisionEvalConfig config =
      idg::CollisionPreset(common.seed.value_or(0));
  if (!common.config.empty()) {
    const nlohmann::json j = idg::ReadJsonFile(common.config);
    idg::CheckSchema(j, "idg.collision");
    if (j.contains("gt")) {
      config.external_gt = idg::ReadTrajectoryCsv(j.at("gt").get<std::string>());
    }
    if (j.contains("noise")) config.noise = idg::NoiseFromJson(j.at("noise"));
    if (j.contains("bilevel")) {
      config.bilevel = idg::PatternSearchConfigFromJson(j.at("bilevel"));
    }
    if (common.seed) config.noise.seed = *common.seed;
  }
  const idg::CollisionReport report = idg::RunCollisionEval(config);
  std::ostringstream csv;
  idg::WriteCollisionCsv(csv, report);
  WriteText(OutPath(common, "collision.csv"), csv.str());
  WriteJson(OutPath(common, "collision_report.json"),
            idg::CollisionReportToJson(report));
  if (report.bilevel_solution) {
    std::ostringstream trace;
    idg::WriteTraceCsv(trace, report.bilevel_solution->trace);
    WriteText(OutPath(common, "collision_trace.csv"), trace.str());
  }
  for (const idg::StageReport* s :
       {&report.residual_pins, &report.residual_bounded, &report.bilevel}) {
    std::cout << s->name << ": delta_R "
              << (s->residual ? std::to_string(*s->residual) : "-")
              << ", delta_T "
              << (s->trajectory_error ? std::to_string(*s->trajectory_error)
                                      : "-")
              << ", " << s->seconds << " s"
              << (s->failure.empty() ? "" : " (" + s->failure + ")") << '\n';
  }
  const bool complete = report.residual_pins.residual &&
                        report.residual_bounded.residual &&
                        report.bilevel_solution.has_value();
  return complete ? 0 : kExitIncomplete;
}

int RunPreprocess(const CommonOptions& common, const std::string& input,
                  const std::string& control_dims,
                  const std::vector<double>& targets,
                  std::optional<double> smoothing, double dt) {
  const idg::RawRecording rec = idg::ReadRawRecordingCsv(input);
  const idg::Trajectory smooth = idg::DifferentiateAndSmooth(rec, smoothing, dt);
  idg::WindowOptions options;
  if (!targets.empty()) {
    options.targets = Eigen::Map<const idg::Vector>(
        targets.data(), static_cast<Eigen::Index>(targets.size()));
  }
  const idg::TrialWindow window =
      idg::DetectWindow(smooth, ParseIntList(control_dims), options);
  WriteJson(OutPath(common, "window.json"), idg::WindowToJson(window));
  if (!window.valid) {
    std::cerr << "preprocess: trial rejected: " << window.reason << '\n';
    return kExitIncomplete;
  }
  WriteText(OutPath(common, "trajectory.csv"),
            TrajectoryText(idg::TrimToWindow(smooth, window)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse dynamic games: forward solves and cost identification"};
  app.require_subcommand(1);
  CommonOptions common;
  common.out = DefaultOutDir();

  auto* forward = app.add_subcommand("forward", "Solve the OLNE at given weights");
  AddCommon(forward, &common, true);
  std::string theta_path, noise_path;
  forward->add_option("--theta", theta_path, "Weights JSON")
      ->required()
      ->check(CLI::ExistingFile);
  forward->add_option("--noise", noise_path, "Noise JSON added to the output")
      ->check(CLI::ExistingFile);

  auto* residual =
      app.add_subcommand("residual", "Residual-based identification");
  AddCommon(residual, &common, true);
  std::string gt_path, constraints_path;
  bool dump_p0 = false;
  residual->add_option("--gt", gt_path, "Ground-truth trajectory CSV")
      ->required()
      ->check(CLI::ExistingFile);
  residual->add_option("--constraints", constraints_path,
                       "Constraint JSON (default: first weights pinned to 1)")
      ->check(CLI::ExistingFile);
  residual->add_flag("--dump-p0", dump_p0, "Write P(0) per player as CSV");

  auto* bilevel = app.add_subcommand("bilevel", "Bi-level pattern search");
  AddCommon(bilevel, &common, true);
  std::string search_path;
  bilevel->add_option("--gt", gt_path, "Ground-truth trajectory CSV")
      ->required()
      ->check(CLI::ExistingFile);
  bilevel->add_option("--search", search_path, "Pattern search JSON")
      ->required()
      ->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Residual vs trajectory error sweep");
  AddCommon(sweep, &common, false);
  std::string preset = "fig1";
  sweep->add_option("--preset", preset, "fig1, fig2 or fig4")
      ->check(CLI::IsMember({"fig1", "fig2", "fig4"}));

  auto* collision =
      app.add_subcommand("collision", "Collision-avoidance evaluation");
  AddCommon(collision, &common, false);
  std::string collision_preset = "collision";
  collision->add_option("--preset", collision_preset, "collision");

  auto* preprocess =
      app.add_subcommand("preprocess", "Smooth, differentiate and trim a recording");
  AddCommon(preprocess, &common, false);
  std::string input, control_dims = "2,2";
  std::vector<double> targets;
  std::optional<double> smoothing;
  double dt = 0.01;
  preprocess->add_option("--input", input, "Raw position CSV (t, x_1..x_n)")
      ->required()
      ->check(CLI::ExistingFile);
  preprocess->add_option("--control-dims", control_dims,
                         "Per-robot velocity dimensions, comma separated");
  preprocess->add_option("--targets", targets, "Target positions")
      ->delimiter(',');
  preprocess->add_option("--smoothing", smoothing,
                         "Spline penalty (default: GCV)");
  preprocess->add_option("--dt", dt, "Output sampling step [s]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (forward->parsed()) return RunForward(common, theta_path, noise_path);
    if (residual->parsed()) {
      return RunResidual(common, gt_path, constraints_path, dump_p0);
    }
    if (bilevel->parsed()) return RunBilevel(common, gt_path, search_path);
    if (sweep->parsed()) return RunSweepCommand(common, preset);
    if (collision->parsed()) return RunCollisionCommand(common, collision_preset);
    if (preprocess->parsed()) {
      return RunPreprocess(common, input, control_dims, targets, smoothing, dt);
    }
  } catch (const idg::Error& e) {
    std::cerr << "error [" << idg::ErrorCodeName(e.code()) << "]: " << e.what()
              << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "idg/data_io.h"

namespace idg {
namespace {

using nlohmann::json;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(Trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double ParseNumber(const std::string& cell, int line, const std::string& column) {
  if (cell.empty()) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line) +
                                            ": empty field '" + column + "'");
  }
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size()) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(line) + ": field '" + column +
                    "' is not a number: '" + cell + "'");
  }
  return v;
}

// Header must be t, <prefix>_1.. for each prefix in order.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable ReadTable(std::istream& in) {
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty() || Trim(line)[0] == '#') continue;
    if (table.header.empty()) {
      table.header = SplitCsv(line);
      continue;
    }
    const auto cells = SplitCsv(line);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      row.push_back(ParseNumber(cells[c], line_no, table.header[c]));
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) {
    throw Error(ErrorCode::kParseError, "missing header row");
  }
  return table;
}

// Counts consecutive columns prefix_1, prefix_2, ... starting at `from` and
// checks the names.
int CountColumns(const std::vector<std::string>& header, size_t from,
                 const std::string& prefix) {
  int count = 0;
  while (from + count < header.size() &&
         header[from + count] == prefix + "_" + std::to_string(count + 1)) {
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kParseError,
                "missing column '" + prefix + "_1'" +
                    (from < header.size() ? " (found '" + header[from] + "')"
                                          : ""));
  }
  return count;
}

void ExpectTimeColumn(const std::vector<std::string>& header) {
  if (header.empty() || header[0] != "t") {
    throw Error(ErrorCode::kParseError, "missing column 't'");
  }
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << std::setprecision(17);
  return out;
}

std::ifstream OpenIn(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  return in;
}

json VectorToJson(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector VectorFromJson(const json& j, const std::string& field) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kParseError, "field '" + field + "' must be an array");
  }
  Vector v(j.size());
  for (size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) {
      throw Error(ErrorCode::kParseError,
                  "field '" + field + "[" + std::to_string(k) +
                      "]' must be a number");
    }
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

json MatrixToJson(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) rows.push_back(VectorToJson(m.row(r)));
  return rows;
}

Matrix MatrixFromJson(const json& j, const std::string& field, int cols_hint) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kParseError, "field '" + field + "' must be an array");
  }
  if (j.empty()) return Matrix(0, cols_hint);
  const int rows = static_cast<int>(j.size());
  Matrix m(rows, static_cast<int>(j[0].size()));
  for (int r = 0; r < rows; ++r) {
    const Vector row =
        VectorFromJson(j[r], field + "[" + std::to_string(r) + "]");
    if (row.size() != m.cols()) {
      throw Error(ErrorCode::kParseError, "field '" + field + "' is ragged");
    }
    m.row(r) = row;
  }
  return m;
}

const json& Field(const json& j, const std::string& name) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(ErrorCode::kParseError, "missing field '" + name + "'");
  }
  return j.at(name);
}

template <typename T>
T Get(const json& j, const std::string& name) {
  const json& f = Field(j, name);
  try {
    return f.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kParseError, "field '" + name + "' has wrong type");
  }
}

template <typename T>
T GetOr(const json& j, const std::string& name, T fallback) {
  return j.contains(name) ? Get<T>(j, name) : fallback;
}

json Header(const std::string& schema) {
  return json{{"schema", schema}, {"version", kSchemaVersion}};
}

json TermToJson(const RunningTerm& term) {
  if (const auto* c = std::get_if<ControlSquare>(&term)) {
    return {{"type", "control_square"}, {"component", c->component}};
  }
  if (const auto* s = std::get_if<StateSquare>(&term)) {
    return {{"type", "state_square"},
            {"component", s->component},
            {"target", s->target}};
  }
  const auto& d = std::get<InverseDistance>(term);
  return {{"type", "inverse_distance"},
          {"power", d.power},
          {"self", d.self},
          {"other", d.other}};
}

RunningTerm TermFromJson(const json& j) {
  const std::string type = Get<std::string>(j, "type");
  if (type == "control_square") {
    return ControlSquare{Get<int>(j, "component")};
  }
  if (type == "state_square") {
    return StateSquare{Get<int>(j, "component"), Get<double>(j, "target")};
  }
  if (type == "inverse_distance") {
    return InverseDistance{Get<int>(j, "power"),
                           Get<std::vector<int>>(j, "self"),
                           Get<std::vector<int>>(j, "other")};
  }
  throw Error(ErrorCode::kParseError, "unknown basis term type '" + type + "'");
}

std::string PollOrderName(PollOrder order) {
  switch (order) {
    case PollOrder::kFixed:
      return "fixed";
    case PollOrder::kCyclic:
      return "cyclic";
    case PollOrder::kComplete:
      return "complete";
  }
  return "fixed";
}

PollOrder PollOrderFromName(const json& j) {
  const std::string name = j.is_string() ? j.get<std::string>() : "";
  for (PollOrder order :
       {PollOrder::kFixed, PollOrder::kCyclic, PollOrder::kComplete}) {
    if (PollOrderName(order) == name) return order;
  }
  throw Error(ErrorCode::kParseError,
              "poll_order must be fixed, cyclic or complete");
}

}  // namespace

// --- trajectories ---------------------------------------------------------

void WriteTrajectoryCsv(std::ostream& out, const Trajectory& traj) {
  traj.Validate();
  const auto old = out.precision(17);
  out << "t";
  for (int j = 0; j < traj.states[0].size(); ++j) out << ",x_" << j + 1;
  for (int j = 0; j < traj.controls[0].size(); ++j) out << ",u_" << j + 1;
  out << "\n";
  for (int k = 0; k < traj.size(); ++k) {
    out << traj.grid.time(k);
    for (int j = 0; j < traj.states[k].size(); ++j) out << "," << traj.states[k][j];
    for (int j = 0; j < traj.controls[k].size(); ++j) {
      out << "," << traj.controls[k][j];
    }
    out << "\n";
  }
  out.precision(old);
}

Trajectory ReadTrajectoryCsv(std::istream& in) {
  const CsvTable table = ReadTable(in);
  ExpectTimeColumn(table.header);
  const int n = CountColumns(table.header, 1, "x");
  const int m = CountColumns(table.header, 1 + n, "u");
  if (static_cast<int>(table.header.size()) != 1 + n + m) {
    throw Error(ErrorCode::kParseError,
                "unexpected column '" + table.header[1 + n + m] + "'");
  }
  if (table.rows.size() < 2) {
    throw Error(ErrorCode::kParseError, "trajectory needs at least two rows");
  }
  const int steps = static_cast<int>(table.rows.size()) - 1;
  const double t0 = table.rows.front()[0];
  const double t1 = table.rows.back()[0];
  Trajectory traj;
  traj.grid = TimeGrid(t0, t1, steps);
  const double h = traj.grid.step_size();
  for (int k = 0; k <= steps; ++k) {
    const auto& row = table.rows[k];
    if (std::abs(row[0] - traj.grid.time(k)) > 1e-6 * h) {
      throw Error(ErrorCode::kParseError,
                  "row " + std::to_string(k + 1) +
                      ": time column is not uniformly spaced");
    }
    Vector x(n), u(m);
    for (int j = 0; j < n; ++j) x[j] = row[1 + j];
    for (int j = 0; j < m; ++j) u[j] = row[1 + n + j];
    traj.states.push_back(x);
    traj.controls.push_back(u);
  }
  return traj;
}

void WriteTrajectoryCsv(const std::string& path, const Trajectory& traj) {
  std::ofstream out = OpenOut(path);
  WriteTrajectoryCsv(out, traj);
}

Trajectory ReadTrajectoryCsv(const std::string& path) {
  std::ifstream in = OpenIn(path);
  return ReadTrajectoryCsv(in);
}

void WriteRawRecordingCsv(std::ostream& out, const RawRecording& rec) {
  rec.Validate();
  const auto old = out.precision(17);
  out << "t";
  const int n = rec.positions.empty() ? 0 : rec.positions[0].size();
  for (int j = 0; j < n; ++j) out << ",x_" << j + 1;
  out << "\n";
  for (size_t k = 0; k < rec.times.size(); ++k) {
    out << rec.times[k];
    for (int j = 0; j < n; ++j) out << "," << rec.positions[k][j];
    out << "\n";
  }
  out.precision(old);
}

RawRecording ReadRawRecordingCsv(std::istream& in) {
  const CsvTable table = ReadTable(in);
  ExpectTimeColumn(table.header);
  const int n = CountColumns(table.header, 1, "x");
  if (static_cast<int>(table.header.size()) != 1 + n) {
    throw Error(ErrorCode::kParseError,
                "unexpected column '" + table.header[1 + n] + "'");
  }
  RawRecording rec;
  for (const auto& row : table.rows) {
    rec.times.push_back(row[0]);
    Vector x(n);
    for (int j = 0; j < n; ++j) x[j] = row[1 + j];
    rec.positions.push_back(x);
  }
  try {
    rec.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  return rec;
}

RawRecording ReadRawRecordingCsv(const std::string& path) {
  std::ifstream in = OpenIn(path);
  return ReadRawRecordingCsv(in);
}

// --- JSON documents -------------------------------------------------------

void CheckSchema(const json& j, const std::string& schema) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kParseError, "expected a JSON object for " + schema);
  }
  const std::string found = Get<std::string>(j, "schema");
  if (found != schema) {
    throw Error(ErrorCode::kParseError,
                "expected schema '" + schema + "', found '" + found + "'");
  }
  const int version = Get<int>(j, "version");
  if (version != kSchemaVersion) {
    throw Error(ErrorCode::kParseError,
                "unsupported " + schema + " version " + std::to_string(version));
  }
}

json GameToJson(const GameDefinition& game) {
  const auto* linear =
      dynamic_cast<const LinearDynamics*>(&game.dynamics());
  if (linear == nullptr) {
    throw Error(ErrorCode::kInvalidArgument,
                "only linear dynamics can be serialized");
  }
  json j = Header("idg.game");
  j["family"] = game.family();
  j["horizon"] = game.horizon();
  j["steps"] = game.grid().steps();
  j["x0"] = VectorToJson(game.x0());
  json b = json::array();
  for (int i = 0; i < game.num_players(); ++i) {
    b.push_back(MatrixToJson(linear->b(i)));
  }
  j["dynamics"] = {{"type", "linear"}, {"a", MatrixToJson(linear->a())},
                   {"b", b}};
  json players = json::array();
  for (const PlayerBasis& basis : game.basis()) {
    json running = json::array();
    for (const RunningTerm& t : basis.running) running.push_back(TermToJson(t));
    json terminal = json::array();
    for (const StateSquare& s : basis.terminal) {
      terminal.push_back({{"component", s.component}, {"target", s.target}});
    }
    players.push_back({{"running", running}, {"terminal", terminal}});
  }
  j["players"] = players;
  return j;
}

GameDefinition GameFromJson(const json& j) {
  CheckSchema(j, "idg.game");
  const std::string family = Get<std::string>(j, "family");
  const double horizon = Get<double>(j, "horizon");
  const int steps = GetOr<int>(j, "steps", 0);
  const Vector x0 = VectorFromJson(Field(j, "x0"), "x0");
  if (!j.contains("dynamics")) {
    if (family == "double_integrator") {
      const std::string basis = GetOr<std::string>(j, "basis", "full");
      if (basis != "full" && basis != "reduced") {
        throw Error(ErrorCode::kParseError,
                    "field 'basis' must be 'full' or 'reduced'");
      }
      return MakeDoubleIntegrator(horizon, x0,
                                  basis == "full"
                                      ? DoubleIntegratorBasis::kFull
                                      : DoubleIntegratorBasis::kReduced,
                                  steps);
    }
    if (family == "collision") {
      return MakeCollisionGame(horizon, x0,
                               VectorFromJson(Field(j, "targets"), "targets"),
                               steps);
    }
    throw Error(ErrorCode::kParseError,
                "family '" + family + "' needs an explicit 'dynamics' field");
  }
  const json& dyn = Field(j, "dynamics");
  if (Get<std::string>(dyn, "type") != "linear") {
    throw Error(ErrorCode::kParseError, "only 'linear' dynamics are supported");
  }
  const Matrix a = MatrixFromJson(Field(dyn, "a"), "dynamics.a", 0);
  std::vector<Matrix> b;
  const json& bj = Field(dyn, "b");
  for (size_t i = 0; i < bj.size(); ++i) {
    b.push_back(MatrixFromJson(bj[i], "dynamics.b", 0));
  }
  std::vector<PlayerBasis> bases;
  for (const json& p : Field(j, "players")) {
    PlayerBasis basis;
    for (const json& t : Field(p, "running")) {
      basis.running.push_back(TermFromJson(t));
    }
    for (const json& t : Field(p, "terminal")) {
      basis.terminal.push_back(
          StateSquare{Get<int>(t, "component"), Get<double>(t, "target")});
    }
    bases.push_back(std::move(basis));
  }
  return GameDefinition(family,
                        std::make_shared<LinearDynamics>(a, std::move(b)),
                        std::move(bases), horizon, x0,
                        steps > 0 ? steps : DefaultSteps(horizon));
}

json ThetaToJson(const ParameterVector& theta) {
  json j = Header("idg.theta");
  json players = json::array();
  for (int i = 0; i < theta.num_players(); ++i) {
    players.push_back(VectorToJson(theta.player(i)));
  }
  j["theta"] = players;
  return j;
}

ParameterVector ThetaFromJson(const json& j) {
  CheckSchema(j, "idg.theta");
  std::vector<Vector> players;
  const json& t = Field(j, "theta");
  for (size_t i = 0; i < t.size(); ++i) {
    players.push_back(VectorFromJson(t[i], "theta[" + std::to_string(i) + "]"));
  }
  return ParameterVector(players);
}

json ConstraintsToJson(const ConstraintSpec& spec) {
  json j = Header("idg.constraints");
  j["pins"] = json::array();
  for (const auto& p : spec.pins) {
    j["pins"].push_back(
        {{"player", p.player}, {"index", p.index}, {"value", p.value}});
  }
  j["bounds"] = json::array();
  for (const auto& b : spec.bounds) {
    j["bounds"].push_back(
        {{"player", b.player}, {"index", b.index}, {"lower", b.lower}});
  }
  return j;
}

ConstraintSpec ConstraintsFromJson(const json& j) {
  CheckSchema(j, "idg.constraints");
  ConstraintSpec spec;
  if (j.contains("pins")) {
    for (const json& p : j.at("pins")) {
      spec.pins.push_back(
          {Get<int>(p, "player"), Get<int>(p, "index"), Get<double>(p, "value")});
    }
  }
  if (j.contains("bounds")) {
    for (const json& b : j.at("bounds")) {
      spec.bounds.push_back(
          {Get<int>(b, "player"), Get<int>(b, "index"), Get<double>(b, "lower")});
    }
  }
  return spec;
}

json NoiseToJson(const NoiseSpec& noise) {
  json j = Header("idg.noise");
  j["sigma_x"] = noise.sigma_x;
  j["sigma_u"] = noise.sigma_u;
  j["seed"] = noise.seed;
  return j;
}

NoiseSpec NoiseFromJson(const json& j) {
  CheckSchema(j, "idg.noise");
  NoiseSpec noise;
  noise.sigma_x = GetOr<double>(j, "sigma_x", 0.0);
  noise.sigma_u = GetOr<double>(j, "sigma_u", 0.0);
  noise.seed = GetOr<std::uint64_t>(j, "seed", 0);
  return noise;
}

json PatternSearchConfigToJson(const PatternSearchConfig& config) {
  json j = Header("idg.pattern_search");
  if (config.initial.num_players() > 0) {
    j["initial"] = ThetaToJson(config.initial)["theta"];
  }
  if (config.initial_mesh.size() > 0) {
    j["initial_mesh"] = VectorToJson(config.initial_mesh);
  }
  j["expansion"] = config.expansion;
  j["contraction"] = config.contraction;
  if (std::isfinite(config.max_mesh_scale)) {
    j["max_mesh_scale"] = config.max_mesh_scale;
  }
  j["max_iterations"] = config.max_iterations;
  j["poll_order"] = PollOrderName(config.poll_order);
  j["min_decrease"] = config.min_decrease;
  j["pattern_moves"] = config.pattern_moves;
  j["mesh_tolerance"] = config.mesh_tolerance;
  j["parallel_poll"] = config.parallel_poll;
  j["constraints"] = ConstraintsToJson(config.constraints);
  return j;
}

PatternSearchConfig PatternSearchConfigFromJson(const json& j) {
  CheckSchema(j, "idg.pattern_search");
  PatternSearchConfig config;
  if (j.contains("initial")) {
    json t = Header("idg.theta");
    t["theta"] = j.at("initial");
    config.initial = ThetaFromJson(t);
  }
  if (j.contains("initial_mesh")) {
    config.initial_mesh = VectorFromJson(j.at("initial_mesh"), "initial_mesh");
  }
  config.expansion = GetOr<double>(j, "expansion", config.expansion);
  config.contraction = GetOr<double>(j, "contraction", config.contraction);
  config.max_mesh_scale =
      GetOr<double>(j, "max_mesh_scale", config.max_mesh_scale);
  config.max_iterations = GetOr<int>(j, "max_iterations", config.max_iterations);
  config.mesh_tolerance =
      GetOr<double>(j, "mesh_tolerance", config.mesh_tolerance);
  if (j.contains("poll_order")) {
    config.poll_order = PollOrderFromName(j.at("poll_order"));
  }
  config.min_decrease = GetOr<double>(j, "min_decrease", config.min_decrease);
  config.pattern_moves = GetOr<bool>(j, "pattern_moves", config.pattern_moves);
  config.parallel_poll = GetOr<bool>(j, "parallel_poll", config.parallel_poll);
  if (j.contains("constraints")) {
    config.constraints = ConstraintsFromJson(j.at("constraints"));
  }
  return config;
}

json ResidualSolutionToJson(const ResidualSolution& sol) {
  json j = Header("idg.residual_result");
  j["theta"] = ThetaToJson(sol.theta)["theta"];
  j["psi0"] = VectorToJson(sol.psi0);
  j["delta_r"] = sol.delta;
  json players = json::array();
  for (const PlayerResidual& p : sol.players) {
    players.push_back({{"alpha", VectorToJson(p.alpha)},
                       {"delta_r", p.delta},
                       {"iterations", p.iterations}});
  }
  j["players"] = players;
  return j;
}

ResidualSolution ResidualSolutionFromJson(const json& j) {
  CheckSchema(j, "idg.residual_result");
  ResidualSolution sol;
  json t = Header("idg.theta");
  t["theta"] = Field(j, "theta");
  sol.theta = ThetaFromJson(t);
  sol.psi0 = VectorFromJson(Field(j, "psi0"), "psi0");
  sol.delta = Get<double>(j, "delta_r");
  for (const json& p : Field(j, "players")) {
    PlayerResidual pr;
    pr.alpha = VectorFromJson(Field(p, "alpha"), "alpha");
    pr.delta = Get<double>(p, "delta_r");
    pr.iterations = Get<int>(p, "iterations");
    sol.players.push_back(std::move(pr));
  }
  return sol;
}

json DiagnosticsToJson(const IdentifiabilityDiagnostics& d) {
  return {{"rank", d.rank},
          {"dimension", d.p_bar.rows()},
          {"full_rank", d.full_rank},
          {"block_zero", d.block_zero},
          {"singular_values", VectorToJson(d.singular_values)},
          {"u12_max_abs",
           d.u12.size() == 0 ? 0.0 : d.u12.cwiseAbs().maxCoeff()}};
}

json BilevelSolutionToJson(const BilevelSolution& sol) {
  json j = Header("idg.bilevel_result");
  j["theta"] = ThetaToJson(sol.theta)["theta"];
  j["delta_t"] = sol.delta;
  j["iterations"] = sol.iterations;
  j["evaluations"] = sol.evaluations;
  j["inner_converged"] = sol.inner_converged;
  j["inner_failed"] = sol.inner_failed;
  j["mesh_converged"] = sol.mesh_converged;
  json trace = json::array();
  for (const TraceEntry& e : sol.trace) {
    trace.push_back({{"iteration", e.iteration},
                     {"objective", e.objective},
                     {"mesh_scale", e.mesh_scale},
                     {"theta", ThetaToJson(e.theta)["theta"]}});
  }
  j["trace"] = trace;
  return j;
}

BilevelSolution BilevelSolutionFromJson(const json& j) {
  CheckSchema(j, "idg.bilevel_result");
  auto theta_of = [](const json& field) {
    json t = Header("idg.theta");
    t["theta"] = field;
    return ThetaFromJson(t);
  };
  BilevelSolution sol;
  sol.theta = theta_of(Field(j, "theta"));
  sol.delta = Get<double>(j, "delta_t");
  sol.iterations = Get<int>(j, "iterations");
  sol.evaluations = Get<int>(j, "evaluations");
  sol.inner_converged = Get<int>(j, "inner_converged");
  sol.inner_failed = Get<int>(j, "inner_failed");
  sol.mesh_converged = Get<bool>(j, "mesh_converged");
  for (const json& e : Field(j, "trace")) {
    sol.trace.push_back({Get<int>(e, "iteration"), theta_of(Field(e, "theta")),
                         Get<double>(e, "objective"),
                         Get<double>(e, "mesh_scale")});
  }
  return sol;
}

json WindowToJson(const TrialWindow& window) {
  json j = Header("idg.window");
  j["valid"] = window.valid;
  j["t0"] = window.t0;
  j["t_end"] = window.t_end;
  j["reason"] = window.reason;
  return j;
}

json OlneReportToJson(const OlneSolution& sol) {
  json j = Header("idg.forward_report");
  j["converged"] = sol.converged;
  j["start_label"] = sol.start_label;
  j["iterations"] = sol.iterations;
  j["shooting_residual"] = sol.shooting_residual;
  j["tolerance"] = sol.tolerance;
  j["initial_costate"] = VectorToJson(sol.initial_costate);
  return j;
}

void WriteTraceCsv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  const auto old = out.precision(17);
  out << "iteration,objective,mesh_scale";
  if (!trace.empty()) {
    const ParameterVector& t = trace.front().theta;
    for (int i = 0; i < t.num_players(); ++i) {
      for (int k = 0; k < t.player(i).size(); ++k) {
        out << ",theta_" << i + 1 << "_" << k + 1;
      }
    }
  }
  out << "\n";
  for (const TraceEntry& e : trace) {
    out << e.iteration << "," << e.objective << "," << e.mesh_scale;
    const Vector s = e.theta.Stacked();
    for (int k = 0; k < s.size(); ++k) out << "," << s[k];
    out << "\n";
  }
  out.precision(old);
}

void WriteMatrixCsv(std::ostream& out, const Matrix& m) {
  const auto old = out.precision(17);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ",";
      out << m(r, c);
    }
    out << "\n";
  }
  out.precision(old);
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in = OpenIn(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const json& j) {
  std::ofstream out = OpenOut(path);
  out << j.dump(2) << "\n";
}

void WriteTextFile(const std::string& path, const std::string& content) {
  std::ofstream out = OpenOut(path);
  out << content;
}

}  // namespace idg

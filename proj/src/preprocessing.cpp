#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "idg/data_io.h"

namespace idg {
namespace {

// Penalty matrices of the Reinsch form: int g''^2 = g^T Q R^-1 Q^T g.
struct ReinschMatrices {
  Matrix q;  // n x (n - 2)
  Matrix r;  // (n - 2) x (n - 2), tridiagonal
};

ReinschMatrices BuildReinsch(const std::vector<double>& t) {
  const int n = static_cast<int>(t.size());
  ReinschMatrices m;
  m.q = Matrix::Zero(n, n - 2);
  m.r = Matrix::Zero(n - 2, n - 2);
  for (int j = 1; j < n - 1; ++j) {
    const double h0 = t[j] - t[j - 1];
    const double h1 = t[j + 1] - t[j];
    m.q(j - 1, j - 1) = 1.0 / h0;
    m.q(j, j - 1) = -1.0 / h0 - 1.0 / h1;
    m.q(j + 1, j - 1) = 1.0 / h1;
    m.r(j - 1, j - 1) = (h0 + h1) / 3.0;
    if (j < n - 2) {
      m.r(j - 1, j) = h1 / 6.0;
      m.r(j, j - 1) = h1 / 6.0;
    }
  }
  return m;
}

double Gcv(const Vector& d, const Vector& z, double lambda) {
  const int n = static_cast<int>(d.size());
  double rss = 0.0, trace = 0.0;
  for (int k = 0; k < n; ++k) {
    const double shrink = 1.0 / (1.0 + lambda * d[k]);
    const double resid = (1.0 - shrink) * z[k];
    rss += resid * resid;
    trace += shrink;
  }
  const double denom = n - trace;
  return denom > 0.0 ? n * rss / (denom * denom)
                     : std::numeric_limits<double>::infinity();
}

}  // namespace

void RawRecording::Validate() const {
  if (times.size() != positions.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "recording needs one position sample per timestamp");
  }
  for (size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k]) || !AllFinite(positions[k])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "non-finite sample at row " + std::to_string(k));
    }
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "timestamps not strictly increasing at row " +
                      std::to_string(k));
    }
    if (positions[k].size() != positions[0].size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "position dimension changes at row " + std::to_string(k));
    }
  }
}

SmoothingSpline::SmoothingSpline(const std::vector<double>& t, const Vector& y,
                                 std::optional<double> lambda)
    : t_(t) {
  const int n = static_cast<int>(t.size());
  if (n < 4) {
    throw Error(ErrorCode::kTooFewSamples,
                "smoothing spline needs at least 4 samples, got " +
                    std::to_string(n));
  }
  if (y.size() != n) {
    throw Error(ErrorCode::kInvalidArgument,
                "spline values and knots differ in length");
  }
  if (lambda && !(*lambda >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "smoothing must be >= 0");
  }
  const ReinschMatrices m = BuildReinsch(t);
  const Eigen::LLT<Matrix> r_llt(m.r);
  const Matrix k = m.q * r_llt.solve(Matrix(m.q.transpose()));

  if (lambda) {
    lambda_ = *lambda;
    g_ = (Matrix::Identity(n, n) + lambda_ * k).ldlt().solve(y);
  } else {
    // GCV over log10(lambda) on a coarse grid, then golden-section search.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (k + k.transpose()));
    const Vector d = eig.eigenvalues().cwiseMax(0.0);
    const Vector z = eig.eigenvectors().transpose() * y;
    double best_log = -12.0;
    double best = Gcv(d, z, std::pow(10.0, best_log));
    for (double lg = -12.0; lg <= 6.0 + 1e-12; lg += 0.25) {
      const double v = Gcv(d, z, std::pow(10.0, lg));
      if (v < best) {
        best = v;
        best_log = lg;
      }
    }
    double a = best_log - 0.25, b = best_log + 0.25;
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - ratio * (b - a), e = a + ratio * (b - a);
    double fc = Gcv(d, z, std::pow(10.0, c)), fe = Gcv(d, z, std::pow(10.0, e));
    for (int it = 0; it < 40; ++it) {
      if (fc <= fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - ratio * (b - a);
        fc = Gcv(d, z, std::pow(10.0, c));
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + ratio * (b - a);
        fe = Gcv(d, z, std::pow(10.0, e));
      }
    }
    const double refined = 0.5 * (a + b);
    lambda_ = std::pow(10.0, Gcv(d, z, std::pow(10.0, refined)) <= best
                                 ? refined
                                 : best_log);
    Vector shrink(n);
    for (int j = 0; j < n; ++j) shrink[j] = 1.0 / (1.0 + lambda_ * d[j]);
    g_ = eig.eigenvectors() * shrink.cwiseProduct(z);
  }
  gamma_ = Vector::Zero(n);
  gamma_.segment(1, n - 2) = r_llt.solve(Vector(m.q.transpose() * g_));
}

int SmoothingSpline::Interval(double t) const {
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const int idx = static_cast<int>(it - t_.begin()) - 1;
  return std::clamp(idx, 0, static_cast<int>(t_.size()) - 2);
}

double SmoothingSpline::Value(double t) const {
  t = std::clamp(t, t_.front(), t_.back());
  const int i = Interval(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h;
  const double b = 1.0 - a;
  return a * g_[i] + b * g_[i + 1] +
         ((a * a * a - a) * gamma_[i] + (b * b * b - b) * gamma_[i + 1]) * h *
             h / 6.0;
}

double SmoothingSpline::Derivative(double t) const {
  t = std::clamp(t, t_.front(), t_.back());
  const int i = Interval(t);
  const double h = t_[i + 1] - t_[i];
  const double a = (t_[i + 1] - t) / h;
  const double b = 1.0 - a;
  return (g_[i + 1] - g_[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * gamma_[i] +
         (3.0 * b * b - 1.0) / 6.0 * h * gamma_[i + 1];
}

Trajectory DifferentiateAndSmooth(const RawRecording& rec,
                                  std::optional<double> smoothing, double dt) {
  rec.Validate();
  if (rec.times.size() < 4) {
    throw Error(ErrorCode::kTooFewSamples,
                "preprocessing needs at least 4 samples per channel");
  }
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "grid step must be positive");
  }
  const double t0 = rec.times.front();
  const double span = rec.times.back() - t0;
  const int steps = std::max(1, static_cast<int>(std::floor(span / dt + 1e-9)));
  const TimeGrid grid(t0, t0 + steps * dt, steps);
  const int channels = static_cast<int>(rec.positions[0].size());
  Trajectory out;
  out.grid = grid;
  out.states.assign(grid.size(), Vector(channels));
  out.controls.assign(grid.size(), Vector(channels));
  for (int c = 0; c < channels; ++c) {
    Vector y(rec.times.size());
    for (size_t k = 0; k < rec.times.size(); ++k) y[k] = rec.positions[k][c];
    const SmoothingSpline spline(rec.times, y, smoothing);
    for (int k = 0; k < grid.size(); ++k) {
      out.states[k][c] = spline.Value(grid.time(k));
      out.controls[k][c] = spline.Derivative(grid.time(k));
    }
  }
  return out;
}

TrialWindow DetectWindow(const Trajectory& traj,
                         const std::vector<int>& control_dims,
                         const WindowOptions& options) {
  traj.Validate();
  int total = 0;
  for (int d : control_dims) total += d;
  if (control_dims.empty() || total != traj.controls[0].size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "control blocks do not cover the control vector");
  }
  auto speeds = [&](int k) {
    std::vector<double> out;
    int offset = 0;
    for (int d : control_dims) {
      out.push_back(traj.controls[k].segment(offset, d).norm());
      offset += d;
    }
    return out;
  };
  TrialWindow w;
  int start = -1;
  for (int k = 0; k < traj.size() && start < 0; ++k) {
    for (double s : speeds(k)) {
      if (s > options.v_start) start = k;
    }
  }
  if (start < 0) {
    w.reason = "never started";
    return w;
  }
  int stop = -1;
  for (int k = start; k < traj.size() && stop < 0; ++k) {
    const auto s = speeds(k);
    if (std::all_of(s.begin(), s.end(),
                    [&](double v) { return v < options.v_stop; })) {
      stop = k;
    }
  }
  w.t0 = traj.grid.time(start);
  if (stop < 0) {
    w.reason = "never stopped";
    return w;
  }
  w.t_end = traj.grid.time(stop);
  if (!(w.t0 < w.t_end)) {
    w.reason = "empty window";
    return w;
  }
  if (options.targets) {
    const Vector& targets = *options.targets;
    const Vector& x = traj.states[stop];
    if (targets.size() != x.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "target vector does not match the state dimension");
    }
    for (int i = 0; 2 * i + 1 < x.size(); ++i) {
      if (std::abs(x[2 * i] - targets[2 * i]) > 0.5 * options.rect_width ||
          std::abs(x[2 * i + 1] - targets[2 * i + 1]) >
              0.5 * options.rect_height) {
        w.reason = "robot " + std::to_string(i) + " outside its target";
        return w;
      }
    }
  }
  w.valid = true;
  return w;
}

Trajectory TrimToWindow(const Trajectory& traj, const TrialWindow& window) {
  traj.Validate();
  if (!window.valid) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot trim to an invalid window: " + window.reason);
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(window.t_end));
  int first = -1, last = -1;
  for (int k = 0; k < traj.size(); ++k) {
    const double t = traj.grid.time(k);
    if (t >= window.t0 - tol && t <= window.t_end + tol) {
      if (first < 0) first = k;
      last = k;
    }
  }
  if (first < 0 || last <= first) {
    throw Error(ErrorCode::kInvalidArgument,
                "window contains fewer than two samples");
  }
  Trajectory out;
  out.grid = TimeGrid(0.0, traj.grid.time(last) - traj.grid.time(first),
                      last - first);
  out.states.assign(traj.states.begin() + first,
                    traj.states.begin() + last + 1);
  out.controls.assign(traj.controls.begin() + first,
                      traj.controls.begin() + last + 1);
  return out;
}

Trajectory AddNoise(const Trajectory& traj, const NoiseSpec& noise) {
  traj.Validate();
  if (!(noise.sigma_x >= 0.0) || !(noise.sigma_u >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise levels must be >= 0");
  }
  Trajectory out = traj;
  if (noise.sigma_x == 0.0 && noise.sigma_u == 0.0) return out;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < out.size(); ++k) {
    for (int j = 0; j < out.states[k].size(); ++j) {
      out.states[k][j] += noise.sigma_x * normal(rng);
    }
    for (int j = 0; j < out.controls[k].size(); ++j) {
      out.controls[k][j] += noise.sigma_u * normal(rng);
    }
  }
  return out;
}

Trajectory SynthesizeGt(const GameDefinition& game,
                        const ParameterVector& theta, const NoiseSpec& noise,
                        const ShootingOptions& options) {
  const std::vector<OlneSolution> candidates =
      SolveOlneMultiStart(game, theta, {}, options);
  for (const OlneSolution& c : candidates) {
    if (c.converged) return AddNoise(c.trajectory, noise);
  }
  throw Error(ErrorCode::kNoConvergence, "no converged OLNE to synthesize from");
}

}  // namespace idg

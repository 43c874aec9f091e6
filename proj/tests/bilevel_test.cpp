#include "idg/bilevel.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "idg/data_io.h"

namespace idg {
namespace {

ParameterVector Theta(std::vector<double> values) {
  return ParameterVector({Eigen::Map<const Vector>(
      values.data(), static_cast<Eigen::Index>(values.size()))});
}

// Weighted quadratic with its minimum at `center`; records every query.
struct Quadratic {
  Vector center;
  Vector weights;
  std::vector<Vector>* visited = nullptr;

  std::optional<double> operator()(const ParameterVector& theta) const {
    const Vector x = theta.Stacked();
    if (visited) visited->push_back(x);
    return (x - center).cwiseAbs2().dot(weights);
  }
};

PatternSearchConfig QuadraticConfig() {
  PatternSearchConfig config;
  config.initial = Theta({1.0, 0.0, 0.0, 0.0});
  config.constraints = ConstraintSpec::PinFirstWeights(1);
  return config;
}

TEST(PatternSearchTest, ConvergesOnQuadraticSurrogate) {
  const Vector center = Eigen::Vector4d(1.0, 2.5, -1.25, 0.4);
  const Quadratic f{center, Eigen::Vector4d(1.0, 1.0, 3.0, 0.5)};
  const PatternSearchConfig config = QuadraticConfig();
  const BilevelSolution sol = PatternSearch(f, config);
  EXPECT_TRUE(sol.mesh_converged);
  EXPECT_LE((sol.theta.Stacked() - center).cwiseAbs().maxCoeff(),
            2.0 * config.mesh_tolerance);
  EXPECT_EQ(sol.inner_failed, 0);
  EXPECT_EQ(sol.inner_converged, sol.evaluations);
}

TEST(PatternSearchTest, TraceIsMonotoneAndStartsAtInitialPoint) {
  const Quadratic f{Eigen::Vector4d(1.0, 3.0, 2.0, -2.0), Vector::Ones(4)};
  const BilevelSolution sol = PatternSearch(f, QuadraticConfig());
  ASSERT_GE(sol.trace.size(), 2u);
  EXPECT_EQ(sol.trace.front().iteration, 0);
  EXPECT_EQ(sol.trace.front().theta.Stacked(), QuadraticConfig().initial.Stacked());
  for (size_t k = 1; k < sol.trace.size(); ++k) {
    EXPECT_LT(sol.trace[k].objective, sol.trace[k - 1].objective);
    EXPECT_GT(sol.trace[k].iteration, sol.trace[k - 1].iteration);
  }
  EXPECT_EQ(sol.trace.back().objective, sol.delta);
}

TEST(PatternSearchTest, DeterministicAndParallelPollMatchesSequential) {
  const Quadratic f{Eigen::Vector4d(1.0, 0.7, 1.9, -0.3),
                    Eigen::Vector4d(1.0, 2.0, 1.0, 4.0)};
  PatternSearchConfig config = QuadraticConfig();
  const BilevelSolution a = PatternSearch(f, config);
  const BilevelSolution b = PatternSearch(f, config);
  config.parallel_poll = true;
  const BilevelSolution c = PatternSearch(f, config);
  for (const BilevelSolution* other : {&b, &c}) {
    ASSERT_EQ(a.trace.size(), other->trace.size());
    for (size_t k = 0; k < a.trace.size(); ++k) {
      EXPECT_EQ(a.trace[k].theta.Stacked(), other->trace[k].theta.Stacked());
      EXPECT_EQ(a.trace[k].objective, other->trace[k].objective);
      EXPECT_EQ(a.trace[k].mesh_scale, other->trace[k].mesh_scale);
    }
    EXPECT_EQ(a.theta.Stacked(), other->theta.Stacked());
  }
}

TEST(PatternSearchTest, PinsNeverMoveAndBoundsClip) {
  std::vector<Vector> visited;
  // Unconstrained minimum violates the bound on the third weight.
  const Quadratic f{Eigen::Vector4d(3.0, 2.0, -5.0, 1.0), Vector::Ones(4),
                    &visited};
  PatternSearchConfig config;
  config.initial = Theta({1.0, 1.0, 0.5, 1.0});
  config.constraints = ConstraintSpec::PinFirstWeights(1);
  config.constraints.bounds.push_back({0, 2, 0.25});
  const BilevelSolution sol = PatternSearch(f, config);
  ASSERT_FALSE(visited.empty());
  for (const Vector& x : visited) {
    EXPECT_EQ(x[0], 1.0);
    EXPECT_GE(x[2], 0.25);
  }
  EXPECT_EQ(sol.theta.player(0)[2], 0.25);
  EXPECT_NEAR(sol.theta.player(0)[1], 2.0, 2e-3);
}

TEST(PatternSearchTest, FailedEvaluationsAreRoutedAround) {
  // The objective fails whenever theta_2 > 2; the minimum lies beyond it.
  const ObjectiveFunction f =
      [](const ParameterVector& t) -> std::optional<double> {
    const Vector x = t.Stacked();
    if (x[1] > 2.0) return std::nullopt;
    return std::pow(x[1] - 3.0, 2) + std::pow(x[2] - 1.0, 2);
  };
  PatternSearchConfig config;
  config.initial = Theta({1.0, 0.0, 0.0});
  config.constraints = ConstraintSpec::PinFirstWeights(1);
  const BilevelSolution sol = PatternSearch(f, config);
  EXPECT_GT(sol.inner_failed, 0);
  EXPECT_LE(sol.theta.player(0)[1], 2.0);
  EXPECT_NEAR(sol.theta.player(0)[1], 2.0, 1e-2);
  EXPECT_NEAR(sol.theta.player(0)[2], 1.0, 1e-2);
}

TEST(PatternSearchTest, InfeasibleStartRejected) {
  const Quadratic f{Vector::Zero(4), Vector::Ones(4)};
  auto code_of = [&](const PatternSearchConfig& config,
                     const ObjectiveFunction& objective) {
    try {
      PatternSearch(objective, config);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  PatternSearchConfig pinned = QuadraticConfig();
  pinned.initial = Theta({2.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(code_of(pinned, f), ErrorCode::kInfeasibleStart);
  PatternSearchConfig bounded = QuadraticConfig();
  bounded.constraints.bounds.push_back({0, 3, 1.0});
  EXPECT_EQ(code_of(bounded, f), ErrorCode::kInfeasibleStart);
  const ObjectiveFunction failing = [](const ParameterVector&) {
    return std::optional<double>();
  };
  EXPECT_EQ(code_of(QuadraticConfig(), failing), ErrorCode::kInfeasibleStart);
}

TEST(PatternSearchTest, InvalidConfigRejected) {
  const Quadratic f{Vector::Zero(4), Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.expansion = 1.0;
  EXPECT_THROW(PatternSearch(f, config), Error);
  config = QuadraticConfig();
  config.contraction = 1.0;
  EXPECT_THROW(PatternSearch(f, config), Error);
  config = QuadraticConfig();
  config.max_iterations = 0;
  EXPECT_THROW(PatternSearch(f, config), Error);
  config = QuadraticConfig();
  config.initial_mesh = Vector::Ones(3);
  EXPECT_THROW(PatternSearch(f, config), Error);
  config = QuadraticConfig();
  config.max_mesh_scale = 0.5;
  EXPECT_THROW(PatternSearch(f, config), Error);
  config = QuadraticConfig();
  config.min_decrease = 1.0;
  EXPECT_THROW(PatternSearch(f, config), Error);
  config.min_decrease = -0.1;
  EXPECT_THROW(PatternSearch(f, config), Error);
}

class PollOrderTest : public ::testing::TestWithParam<PollOrder> {};

TEST_P(PollOrderTest, ConvergesOnQuadraticSurrogate) {
  const Vector center = Eigen::Vector4d(1.0, -1.5, 0.75, 2.2);
  const Quadratic f{center, Eigen::Vector4d(1.0, 2.0, 1.0, 0.5)};
  PatternSearchConfig config = QuadraticConfig();
  config.poll_order = GetParam();
  config.min_decrease = 1e-3;
  const BilevelSolution sol = PatternSearch(f, config);
  EXPECT_TRUE(sol.mesh_converged);
  EXPECT_LE((sol.theta.Stacked() - center).cwiseAbs().maxCoeff(), 0.05);
}

INSTANTIATE_TEST_SUITE_P(AllOrders, PollOrderTest,
                         ::testing::Values(PollOrder::kFixed,
                                           PollOrder::kCyclic,
                                           PollOrder::kComplete));

TEST(PatternSearchTest, CyclicOrderResumesAfterAcceptedCoordinate) {
  std::vector<Vector> visited;
  const Quadratic f{Eigen::Vector4d(1.0, 5.0, 5.0, 5.0), Vector::Ones(4),
                    &visited};
  PatternSearchConfig config = QuadraticConfig();
  config.poll_order = PollOrder::kCyclic;
  config.max_iterations = 2;
  PatternSearch(f, config);
  ASSERT_GE(visited.size(), 3u);
  EXPECT_NE(visited[1][1], visited[0][1]);  // first poll moves weight 2
  EXPECT_EQ(visited[2][1], visited[1][1]);  // next round starts at weight 3
  EXPECT_NE(visited[2][2], visited[1][2]);
}

TEST(PatternSearchTest, CompletePollTakesBestImprovement) {
  const Quadratic f{Eigen::Vector4d(1.0, 0.25, 3.0, 0.0), Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.max_iterations = 1;
  const BilevelSolution first = PatternSearch(f, config);
  config.poll_order = PollOrder::kComplete;
  const BilevelSolution best = PatternSearch(f, config);
  EXPECT_EQ(first.theta.Stacked(), Eigen::Vector4d(1.0, 0.25, 0.0, 0.0));
  EXPECT_EQ(best.theta.Stacked(), Eigen::Vector4d(1.0, 0.0, 0.25, 0.0));
}

TEST(PatternSearchTest, MeshScaleIsCapped) {
  const Quadratic f{Eigen::Vector4d(1.0, 50.0, 0.0, 0.0), Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.max_mesh_scale = 2.0;
  config.max_iterations = 20;
  const BilevelSolution sol = PatternSearch(f, config);
  for (const TraceEntry& entry : sol.trace) EXPECT_LE(entry.mesh_scale, 2.0);
  EXPECT_EQ(sol.trace.back().theta.Stacked()[1], 0.25 + 19 * 0.5);
}

TEST(PatternSearchTest, PatternMovesLeaveTheCoordinateAxes) {
  const Vector center = Eigen::Vector4d(1.0, 3.0, 3.0, 3.0);
  const Quadratic f{center, Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.poll_order = PollOrder::kCyclic;
  config.pattern_moves = true;
  const BilevelSolution sol = PatternSearch(f, config);
  int diagonal_steps = 0;
  for (size_t k = 1; k < sol.trace.size(); ++k) {
    const Vector step =
        sol.trace[k].theta.Stacked() - sol.trace[k - 1].theta.Stacked();
    if ((step.array() != 0.0).count() > 1) ++diagonal_steps;
    EXPECT_LT(sol.trace[k].objective, sol.trace[k - 1].objective);
  }
  EXPECT_GT(diagonal_steps, 0);
  EXPECT_TRUE(sol.mesh_converged);
  EXPECT_LE((sol.theta.Stacked() - center).cwiseAbs().maxCoeff(), 0.01);
}

TEST(PatternSearchTest, SufficientDecreaseRejectsSmallGains) {
  const Quadratic f{Eigen::Vector4d(1.0, 3.0, -2.0, 0.1), Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.min_decrease = 0.1;
  const BilevelSolution sol = PatternSearch(f, config);
  for (size_t k = 1; k < sol.trace.size(); ++k) {
    EXPECT_LT(sol.trace[k].objective, 0.9 * sol.trace[k - 1].objective);
  }
}

TEST(PatternSearchTest, IterationBudgetStopsSearch) {
  const Quadratic f{Eigen::Vector4d(1.0, 50.0, 0.0, 0.0), Vector::Ones(4)};
  PatternSearchConfig config = QuadraticConfig();
  config.max_iterations = 3;
  const BilevelSolution sol = PatternSearch(f, config);
  EXPECT_EQ(sol.iterations, 3);
  EXPECT_FALSE(sol.mesh_converged);
}

TEST(ProjectOntoConstraintsTest, PinsAndClips) {
  ConstraintSpec spec = ConstraintSpec::PinFirstWeights(1);
  spec.bounds.push_back({0, 1, 0.5});
  const ParameterVector p = ProjectOntoConstraints(Theta({3.0, 0.1, -1.0}), spec);
  EXPECT_EQ(p.Stacked(), Eigen::Vector3d(1.0, 0.5, -1.0));
}

class DoubleIntegratorBilevelTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    game_ = new GameDefinition(MakeDoubleIntegrator(
        6.0, Eigen::Vector2d(1.0, -1.0), DoubleIntegratorBasis::kFull));
    gt_ = new Trajectory(SynthesizeGt(*game_, Theta({1.0, 2.0, 1.0}),
                                      NoiseSpec{0.1, 0.1, 7}));
  }
  static void TearDownTestSuite() {
    delete game_;
    delete gt_;
  }

  static PatternSearchConfig FreeSecondWeight() {
    PatternSearchConfig config;
    config.initial = Theta({1.0, 1.0, 1.0});
    config.constraints = ConstraintSpec::PinFirstWeights(1);
    config.constraints.pins.push_back({0, 2, 1.0});
    return config;
  }

  static double TrajectoryErrorAt(double theta2) {
    return TrajectoryErrorOf(*game_, Theta({1.0, theta2, 1.0}), *gt_)->total;
  }

  static GameDefinition* game_;
  static Trajectory* gt_;
};

GameDefinition* DoubleIntegratorBilevelTest::game_ = nullptr;
Trajectory* DoubleIntegratorBilevelTest::gt_ = nullptr;

TEST_F(DoubleIntegratorBilevelTest, NoisyGroundTruthRecoversSecondWeight) {
  const BilevelSolution sol = PatternSearch(*game_, *gt_, FreeSecondWeight());
  const double theta2 = sol.theta.player(0)[1];
  EXPECT_NEAR(theta2, 2.0, 0.25);

  // Dense 1-D grid oracle for this seed.
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = 1.0 + 0.02 * k;
    const double v = TrajectoryErrorAt(t);
    if (v < best) {
      best = v;
      arg = t;
    }
  }
  EXPECT_NEAR(theta2, arg, 0.04);
  EXPECT_LE(sol.delta, best + 1e-9);

  // Replaying the reported optimum reproduces the objective.
  EXPECT_NEAR(TrajectoryErrorOf(*game_, sol.theta, *gt_)->total, sol.delta,
              1e-9);
}

TEST_F(DoubleIntegratorBilevelTest, WarmStartNeverWorseThanResidualEstimate) {
  const PatternSearchConfig config = FreeSecondWeight();
  ConstraintSpec residual_constraints = ConstraintSpec::PinFirstWeights(1);
  const ResidualSolution residual =
      IdentifyResidual(*game_, *gt_, residual_constraints);
  const RefinedSolution refined =
      RefineFromResidual(*game_, *gt_, residual, config);
  EXPECT_EQ(refined.warm_start.player(0)[0], 1.0);
  EXPECT_EQ(refined.warm_start.player(0)[2], 1.0);
  EXPECT_EQ(refined.warm_start.player(0)[1], residual.theta.player(0)[1]);
  ASSERT_TRUE(refined.warm_start_delta.has_value());
  EXPECT_LE(refined.solution.delta, *refined.warm_start_delta);
  EXPECT_EQ(refined.solution.trace.front().theta.Stacked(),
            refined.warm_start.Stacked());
}

TEST(RefineFromResidualTest, StartAtLocalMinimumIsReturned) {
  const GameDefinition game = MakeDoubleIntegrator(
      6.0, Eigen::Vector2d(1.0, -1.0), DoubleIntegratorBasis::kFull);
  const ParameterVector truth = Theta({1.0, 2.0, 1.0});
  const Trajectory gt = SynthesizeGt(game, truth, NoiseSpec{});
  ResidualSolution residual;
  residual.theta = truth;
  PatternSearchConfig config;
  config.constraints = ConstraintSpec::PinFirstWeights(1);
  config.constraints.pins.push_back({0, 2, 1.0});
  config.mesh_tolerance = 0.1;
  const RefinedSolution refined =
      RefineFromResidual(game, gt, residual, config);
  EXPECT_EQ(refined.solution.trace.size(), 1u);
  EXPECT_EQ(refined.solution.theta.Stacked(), truth.Stacked());
  EXPECT_TRUE(refined.solution.mesh_converged);
  EXPECT_LE(refined.solution.delta, 1e-6);
}

}  // namespace
}  // namespace idg

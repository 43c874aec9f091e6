#include "idg/experiments.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace idg {
namespace {

std::vector<std::string> Split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::vector<std::string>> CsvRows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) rows.push_back(Split(line));
  return rows;
}

std::string SweepCsv(const ExperimentResult& r) {
  std::ostringstream out;
  WriteSweepCsv(out, r);
  return out.str();
}

TEST(SweepSpecTest, GridValuesIncludeEndpoints) {
  const SweepSpec spec = SweepPreset("fig1");
  const std::vector<double> values = spec.GridValues();
  ASSERT_EQ(values.size(), 36u);
  EXPECT_EQ(values.front(), 0.5);
  EXPECT_EQ(values.back(), 4.0);
  EXPECT_NEAR(values[15], 2.0, 1e-12);
  EXPECT_NEAR(values[1] - values[0], 0.1, 1e-12);
}

TEST(SweepSpecTest, ValidateRejectsBadSpecs) {
  SweepSpec spec = SweepPreset("fig1");
  spec.grid_count = 2;
  EXPECT_THROW(spec.Validate(), Error);
  spec = SweepPreset("fig1");
  spec.grid_max = spec.grid_min;
  EXPECT_THROW(spec.Validate(), Error);
  spec = SweepPreset("fig1");
  spec.free_index = 3;
  EXPECT_THROW(spec.Validate(), Error);
  spec = SweepPreset("fig1");
  spec.noise.sigma_x = -0.1;
  EXPECT_THROW(spec.Validate(), Error);
  EXPECT_THROW(SweepPreset("fig3"), Error);
}

TEST(SweepPresetTest, Fig2UsesReducedBasis) {
  const SweepSpec spec = SweepPreset("fig2");
  EXPECT_EQ(spec.model.basis_dim(0), 2);
  EXPECT_EQ(spec.truth.basis_dim(0), 3);
  EXPECT_EQ(spec.base_theta.player(0)[0], 1.0);
}

TEST(SweepPresetTest, Fig4SeedEntersNoise) {
  const SweepSpec spec = SweepPreset("fig4", 9);
  EXPECT_EQ(spec.noise.sigma_x, 0.1);
  EXPECT_EQ(spec.noise.sigma_u, 0.1);
  EXPECT_EQ(spec.noise.seed, 9u);
}

TEST(SmallestIndicesTest, SkipsMissingAndOrdersByValue) {
  const std::vector<std::optional<double>> v = {3.0, std::nullopt, 1.0, 2.0,
                                                1.0};
  EXPECT_EQ(SmallestIndices(v, 3), (std::vector<int>{2, 4, 3}));
  EXPECT_EQ(SmallestIndices(v, 10).size(), 4u);
}

class Fig1SweepTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    result_ = new ExperimentResult(RunSweep(SweepPreset("fig1")));
  }
  static void TearDownTestSuite() { delete result_; }
  static ExperimentResult* result_;
};
ExperimentResult* Fig1SweepTest::result_ = nullptr;

TEST_F(Fig1SweepTest, TrueWeightAttainsGlobalMinimum) {
  const ExperimentResult& r = *result_;
  ASSERT_TRUE(r.argmin_trajectory && r.argmin_residual);
  EXPECT_NEAR(r.points[*r.argmin_trajectory].value, 2.0, 1e-9);
  EXPECT_NEAR(r.points[*r.argmin_residual].value, 2.0, 1e-9);
  EXPECT_LE(r.points[*r.argmin_trajectory].trajectory_error->total, 1e-6);
}

TEST_F(Fig1SweepTest, PinnedCostateSolvesTheGame) {
  const GameDefinition game = SweepPreset("fig1").truth;
  const OlneSolution sol = Shoot(
      game, SweepPreset("fig1").truth_theta,
      CostateGuess{"pinned", result_->pinned_costate});
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.iterations, 1);
}

TEST_F(Fig1SweepTest, CsvColumnsAndNormalization) {
  const auto rows = CsvRows(SweepCsv(*result_));
  ASSERT_EQ(rows.size(), 37u);
  EXPECT_EQ(rows[0],
            (std::vector<std::string>{"value", "theta_1", "theta_2", "theta_3",
                                      "delta_R", "delta_T_x", "delta_T_u",
                                      "delta_T", "converged", "delta_R_norm",
                                      "delta_T_norm"}));
  double max_r = 0.0, max_t = 0.0;
  for (size_t k = 1; k < rows.size(); ++k) {
    ASSERT_EQ(rows[k].size(), 11u);
    const double r = std::stod(rows[k][9]), t = std::stod(rows[k][10]);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
    max_r = std::max(max_r, r);
    max_t = std::max(max_t, t);
    EXPECT_EQ(rows[k][8], "1");
    EXPECT_NEAR(std::stod(rows[k][7]),
                std::stod(rows[k][5]) + std::stod(rows[k][6]), 1e-9);
  }
  EXPECT_EQ(max_r, 1.0);
  EXPECT_EQ(max_t, 1.0);
}

TEST_F(Fig1SweepTest, JsonRecordsArgminsAndTenSmallest) {
  const nlohmann::json j = SweepResultToJson(*result_);
  EXPECT_EQ(j.at("schema"), "idg.sweep_result");
  EXPECT_EQ(j.at("argmin_delta_T"), *result_->argmin_trajectory);
  EXPECT_EQ(j.at("smallest_delta_R").size(), 10u);
  EXPECT_EQ(j.at("smallest_delta_T")[0], *result_->argmin_trajectory);
  EXPECT_NEAR(j.at("grid").at("step").get<double>(), 0.1, 1e-12);
}

TEST(SweepTest, RerunIsByteIdentical) {
  const SweepSpec spec = SweepPreset("fig4", 3);
  EXPECT_EQ(SweepCsv(RunSweep(spec)), SweepCsv(RunSweep(spec)));
}

TEST(SweepTest, DifferentSeedsDiffer) {
  EXPECT_NE(SweepCsv(RunSweep(SweepPreset("fig4", 1))),
            SweepCsv(RunSweep(SweepPreset("fig4", 2))));
}

TEST(SweepTest, FailedPointsBecomeEmptyCells) {
  // Single shooting cannot reach these weights within the divergence guard.
  SweepSpec spec = SweepPreset("fig2");
  spec.grid_min = 4.0;
  spec.grid_max = 12.0;
  spec.grid_count = 5;
  const ExperimentResult r = RunSweep(spec);
  const auto rows = CsvRows(SweepCsv(r));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[1][7], "1");
  const auto& last = rows.back();
  ASSERT_EQ(last.size(), 10u);
  EXPECT_FALSE(last[3].empty());  // delta_R is always available
  EXPECT_TRUE(last[4].empty());
  EXPECT_TRUE(last[6].empty());
  EXPECT_EQ(last[7], "0");
  EXPECT_TRUE(last[9].empty());
  EXPECT_FALSE(r.points.back().failure.empty());
  EXPECT_EQ(SweepResultToJson(r).at("failures").back().at("index"), 4);
}

TEST(SweepTest, UnnormalizedCurvesKeepRawValues) {
  SweepSpec spec = SweepPreset("fig1");
  spec.normalize = false;
  spec.grid_min = 1.5;
  spec.grid_max = 2.5;
  spec.grid_count = 3;
  const ExperimentResult r = RunSweep(spec);
  const auto rows = CsvRows(SweepCsv(r));
  EXPECT_EQ(rows[1][4], rows[1][9]);
  EXPECT_EQ(rows[1][7], rows[1][10]);
}

TEST(CollisionCsvTest, MissingValuesAreEmpty) {
  CollisionReport report;
  report.residual_pins = {"residual_pins",
                          ParameterVector({Vector(Eigen::Vector2d(1, 2)),
                                           Vector(Eigen::Vector2d(3, 4))}),
                          1e-7, 2800.0, 0.5, ""};
  report.residual_bounded = {"residual_bounded", std::nullopt, std::nullopt,
                             std::nullopt, 0.1, "infeasible"};
  report.bilevel = {"bilevel",
                    ParameterVector({Vector(Eigen::Vector2d(1, 2.5)),
                                     Vector(Eigen::Vector2d(3, 4))}),
                    std::nullopt, 13.0, 60.0, ""};
  std::ostringstream out;
  WriteCollisionCsv(out, report);
  EXPECT_EQ(out.str(),
            "stage,delta_R,delta_T,theta_1_1,theta_1_2,theta_2_1,theta_2_2\n"
            "residual_pins,9.9999999999999995e-08,2800,1,2,3,4\n"
            "residual_bounded,,,,,,\n"
            "bilevel,,13,1,2.5,3,4\n");
  const nlohmann::json j = CollisionReportToJson(report);
  EXPECT_EQ(j.at("residual_bounded").at("failure"), "infeasible");
  EXPECT_TRUE(j.at("residual_bounded").at("delta_R").is_null());
  EXPECT_DOUBLE_EQ(j.at("speedup").get<double>(), 600.0);
}

TEST(CollisionPresetTest, MatchesProtocol) {
  const CollisionEvalConfig c = CollisionPreset();
  EXPECT_EQ(c.game.basis_dim(0), 8);
  EXPECT_EQ(c.truth_theta.player(0)[1], 4.0);
  EXPECT_EQ(c.truth_theta.player(1)[1], 1.0);
  EXPECT_EQ(c.pins_only.pins.size(), 2u);
  EXPECT_TRUE(c.pins_only.bounds.empty());
  EXPECT_EQ(c.bounded.bounds.size(), 4u);
  EXPECT_EQ(c.bilevel.initial.player(0)[6], 750.0);
  EXPECT_EQ(c.bilevel.initial.player(1)[0], 1.0);
  EXPECT_EQ(c.bilevel.constraints.pins.size(), 2u);
  EXPECT_EQ(c.bilevel.constraints.bounds.size(), 14u);
  EXPECT_EQ(c.bilevel.poll_order, PollOrder::kCyclic);
  EXPECT_EQ(c.bilevel.max_iterations, 200);
  EXPECT_NO_THROW(ProjectOntoConstraints(c.bilevel.initial, c.bilevel.constraints));
}

}  // namespace
}  // namespace idg

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "teamprod/csv.hpp"
#include "teamprod/panel_fe.hpp"
#include "teamprod/rng.hpp"

using namespace teamprod;
using namespace teamprod::fe;

namespace {

FixedEffectSpec spec_for(std::vector<Factor> factors, Dimension d = Dimension::start) {
  FixedEffectSpec s;
  s.outcome = d;
  s.factors = std::move(factors);
  return s;
}

const std::vector<Factor> kThreeWay = {Factor::athlete, Factor::event, Factor::starting_order};

double max_contrast_gap(const std::vector<std::map<std::string, double>>& a,
                        const std::vector<std::map<std::string, double>>& b) {
  double worst = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    for (const auto& [lvl, v] : a[f]) worst = std::max(worst, std::abs(v - b[f].at(lvl)));
  }
  return worst;
}

double contrast_rmse(const std::vector<std::map<std::string, double>>& a,
                     const std::vector<std::map<std::string, double>>& b) {
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    for (const auto& [lvl, v] : a[f]) {
      ss += (v - b[f].at(lvl)) * (v - b[f].at(lvl));
      ++n;
    }
  }
  return std::sqrt(ss / static_cast<double>(n));
}

std::vector<std::map<std::string, double>> planted_contrasts(const fixtures::PlantedFe& p) {
  std::vector<std::map<std::string, double>> out;
  for (const auto& eff : p.effects) {
    std::map<std::string, double> c;
    const double base = eff.begin()->second;
    for (const auto& [lvl, v] : eff) c[lvl] = v - base;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(FixedEffects, SaturatedTwoByTwoIsExact) {
  const std::vector<FeRow> rows = {{1.0 + 10.0, {"A", "e1"}}, {1.0 + 20.0, {"A", "e2"}},
                                   {3.5 + 10.0, {"B", "e1"}}, {3.5 + 20.0, {"B", "e2"}}};
  const auto fit = estimate_fixed_effects(rows, spec_for({Factor::athlete, Factor::event}));
  ASSERT_TRUE(fit.converged);
  for (double r : fit.residuals) EXPECT_NEAR(r, 0.0, 1e-10);
  const auto& a = fit.coefficients.at(Factor::athlete);
  EXPECT_NEAR(a.at("A") - a.at("B"), 1.0 - 3.5, 1e-12);
}

TEST(FixedEffects, OneWayIsGroupMeans) {
  const std::vector<FeRow> rows = {{2.0, {"A"}}, {4.0, {"A"}}, {10.0, {"B"}}, {7.0, {"C"}}, {9.0, {"C"}}};
  const auto fit = estimate_fixed_effects(rows, spec_for({Factor::athlete}));
  const auto& a = fit.coefficients.at(Factor::athlete);
  EXPECT_NEAR(fit.intercept + a.at("A"), 3.0, 1e-12);
  EXPECT_NEAR(fit.intercept + a.at("B"), 10.0, 1e-12);
  EXPECT_NEAR(fit.intercept + a.at("C"), 8.0, 1e-12);
  // mean_zero is count weighted
  EXPECT_NEAR(2 * a.at("A") + a.at("B") + 2 * a.at("C"), 0.0, 1e-12);
}

TEST(FixedEffects, FirstLevelZeroPolicy) {
  auto p = fixtures::planted_three_way(200, 3, 0.01);
  auto spec = spec_for(kThreeWay);
  spec.reference_policy = ReferencePolicy::first_level_zero;
  const auto fit = estimate_fixed_effects(p.rows, spec);
  for (auto f : kThreeWay) EXPECT_EQ(fit.coefficients.at(f).begin()->second, 0.0);
  const auto mz = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  EXPECT_LT(max_contrast_gap(oracle::contrasts_of(fit), oracle::contrasts_of(mz)), 1e-9);
  for (std::size_t i = 0; i < p.rows.size(); ++i) EXPECT_NEAR(fit.residuals[i], mz.residuals[i], 1e-9);
}

TEST(FixedEffects, PlantedWithSmallNoiseWithinOnePercent) {
  const auto p = fixtures::planted_three_way(500, 11, 0.01);
  const auto fit = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(contrast_rmse(oracle::contrasts_of(fit), planted_contrasts(p)), 0.01);
}

TEST(FixedEffects, MatchesDenseOracleOnSmallDesigns) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const std::size_t n = 80 + 10 * seed;
    const auto p = fixtures::planted_three_way(n, seed, 0.3, 25, 9, 6);
    const auto fit = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
    const auto dense = oracle::dense_fe(p.rows, 3);
    ASSERT_EQ(dense.rank, dense.columns);
    EXPECT_LT(contrast_rmse(oracle::contrasts_of(fit), dense.contrasts), 1e-7) << "seed " << seed;
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(fit.fitted(p.rows[i]), dense.fitted[i], 1e-7);
  }
}

TEST(FixedEffects, ResidualsOrthogonalToEveryLevel) {
  const auto p = fixtures::planted_three_way(300, 4, 0.5);
  const auto fit = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  std::vector<std::map<std::string, double>> sums(3);
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    for (int f = 0; f < 3; ++f) sums[f][p.rows[i].levels[f]] += fit.residuals[i];
  }
  for (const auto& s : sums) {
    for (const auto& [lvl, v] : s) EXPECT_NEAR(v, 0.0, 1e-8) << lvl;
  }
}

TEST(FixedEffects, ShiftChangesOnlyIntercept) {
  auto p = fixtures::planted_three_way(250, 8, 0.2);
  const auto base = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  for (auto& r : p.rows) r.outcome += 17.25;
  const auto moved = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  EXPECT_NEAR(moved.intercept - base.intercept, 17.25, 1e-9);
  for (auto f : kThreeWay) {
    for (const auto& [lvl, v] : base.coefficients.at(f)) EXPECT_NEAR(moved.coefficients.at(f).at(lvl), v, 1e-9);
  }
  for (std::size_t i = 0; i < p.rows.size(); ++i) EXPECT_NEAR(moved.residuals[i], base.residuals[i], 1e-9);
}

TEST(FixedEffects, PermutationEquivariance) {
  auto p = fixtures::planted_three_way(250, 9, 0.2);
  const auto base = estimate_fixed_effects(p.rows, spec_for(kThreeWay));
  std::vector<std::size_t> perm(p.rows.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(99);
  rng.shuffle(perm);
  std::vector<FeRow> shuffled;
  for (auto i : perm) shuffled.push_back(p.rows[i]);
  const auto fit = estimate_fixed_effects(shuffled, spec_for(kThreeWay));
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_NEAR(fit.residuals[k], base.residuals[perm[k]], 1e-9);
}

TEST(FixedEffects, Errors) {
  auto kind_of = [](const std::vector<FeRow>& rows, const FixedEffectSpec& spec) {
    try {
      estimate_fixed_effects(rows, spec);
    } catch (const FeError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no FeError";
    return FeError::Kind::InvalidSpec;
  };
  EXPECT_EQ(kind_of({}, spec_for({Factor::athlete})), FeError::Kind::EmptyInput);
  EXPECT_EQ(kind_of({{1.0, {"A"}}}, spec_for({})), FeError::Kind::InvalidSpec);
  EXPECT_EQ(kind_of({{1.0, {"A", "A"}}}, spec_for({Factor::athlete, Factor::athlete})), FeError::Kind::InvalidSpec);
  EXPECT_EQ(kind_of({{NAN, {"A"}}}, spec_for({Factor::athlete})), FeError::Kind::InvalidSpec);
  // Two disconnected athlete/event groups.
  const std::vector<FeRow> split = {{1, {"A", "e1"}}, {2, {"A", "e1"}}, {3, {"B", "e2"}}, {4, {"B", "e2"}}};
  EXPECT_EQ(kind_of(split, spec_for({Factor::athlete, Factor::event})), FeError::Kind::DegenerateDesign);
  // Event and order perfectly aliased.
  std::vector<FeRow> aliased;
  for (int i = 0; i < 12; ++i) {
    const std::string e = "e" + std::to_string(i % 3);
    aliased.push_back({double(i), {"a" + std::to_string(i % 4), e, "o" + std::to_string(i % 3)}});
  }
  EXPECT_EQ(kind_of(aliased, spec_for(kThreeWay)), FeError::Kind::DegenerateDesign);
}

TEST(FixedEffects, IterationCapReportsNotConverged) {
  const auto p = fixtures::planted_three_way(300, 2, 0.5);
  auto spec = spec_for(kThreeWay);
  spec.max_iterations = 1;
  const auto fit = estimate_fixed_effects(p.rows, spec);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations_used, 1);
  EXPECT_THROW(athlete_skill(fit, {}), FeError);
}

TEST(AthleteSkill, DropsAthletesBelowTwoRuns) {
  const std::vector<FeRow> rows = {{1, {"A"}}, {2, {"A"}}, {3, {"B"}}, {4, {"B"}}, {5, {"C"}}};
  const auto fit = estimate_fixed_effects(rows, spec_for({Factor::athlete}));
  const auto all = athlete_skill(fit, {{"A", 2}, {"B", 2}, {"C", 2}});
  EXPECT_EQ(all.profiles.size(), 3u);
  const auto some = athlete_skill(fit, {{"A", 2}, {"B", 2}, {"C", 1}});
  EXPECT_EQ(some.profiles.size(), 2u);
  ASSERT_EQ(some.dropped.size(), 1u);
  EXPECT_EQ(some.dropped[0], (std::pair<std::string, int>{"C", 1}));
  EXPECT_TRUE(athlete_skill(FixedEffectFit{}, {}).profiles.empty());
}

TEST(ResidualizeTeam, AbsorbedOutcomeGivesZero) {
  const std::vector<TeamOutcomeRow> rows = {{5.0, "e1", 1}, {5.0, "e1", 1}, {7.0, "e2", 1}, {7.0, "e2", 1}};
  for (double r : residualize_team(rows)) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(ResidualizeTeam, SingleCellIsDemeaned) {
  const std::vector<TeamOutcomeRow> rows = {{1.0, "e", 1}, {2.0, "e", 1}, {6.0, "e", 1}};
  const auto r = residualize_team(rows);
  EXPECT_NEAR(r[0], -2.0, 1e-12);
  EXPECT_NEAR(r[1], -1.0, 1e-12);
  EXPECT_NEAR(r[2], 3.0, 1e-12);
}

TEST(ResidualizeTeam, MatchesDenseOracle) {
  Rng rng(21);
  std::vector<TeamOutcomeRow> rows;
  std::vector<FeRow> dense_rows;
  for (int i = 0; i < 120; ++i) {
    const std::string ev = "e" + std::to_string(i % 10);
    const int order = 1 + static_cast<int>((i / 10 + i % 10) % 6);
    const double y = 0.3 * (i % 10) + 0.05 * order + rng.normal(0.0, 0.2);
    rows.push_back({y, ev, order});
    dense_rows.push_back({y, {ev, std::to_string(order)}});
  }
  const auto resid = residualize_team(rows);
  const auto dense = oracle::dense_fe(dense_rows, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_NEAR(resid[i], rows[i].outcome - dense.fitted[i], 1e-8);
}

TEST(FixedEffects, CoefficientsCsvLayout) {
  const std::vector<FeRow> rows = {{1, {"A"}}, {3, {"B"}}};
  const auto fit = estimate_fixed_effects(rows, spec_for({Factor::athlete}));
  std::stringstream ss;
  write_coefficients_csv(ss, fit);
  const auto t = csv::read_table(ss);
  EXPECT_EQ(t.header, (std::vector<std::string>{"factor", "level", "estimate"}));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0][0], "intercept");
  EXPECT_EQ(t.rows[1], (std::vector<std::string>{"athlete", "A", "-1"}));
}

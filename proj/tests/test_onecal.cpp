#include "oracles.hpp"

#include "resocal/onecal.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace resocal;
using namespace resocal::onecal;
using oracle::cd;

namespace {

FrequencyGrid band(Eigen::Index n = 21) { return FrequencyGrid::linspace(4e9, 8e9, n); }

CalKit ideal_kit(const FrequencyGrid& g, CalKitMetadata meta = {}) {
  return CalKit({CalStandard::flat(StandardKind::Open, g, cd(1)), CalStandard::flat(StandardKind::Short, g, cd(-1)),
                 CalStandard::flat(StandardKind::Load, g, cd(0))},
                std::move(meta));
}

ComplexTrace flat(const FrequencyGrid& g, cd v) { return ComplexTrace(g, VectorXc<double>::Constant(g.size(), v)); }

std::array<ComplexTrace, 3> measure(const OnePortErrorTerms& t, const CalKit& kit) {
  return {embed_error(t, kit[0].known_gamma), embed_error(t, kit[1].known_gamma), embed_error(t, kit[2].known_gamma)};
}

OnePortErrorTerms random_terms(std::mt19937_64& rng, const FrequencyGrid& g) {
  OnePortErrorTerms t{g, VectorXc<double>(g.size()), VectorXc<double>(g.size()), VectorXc<double>(g.size())};
  std::uniform_real_distribution<double> mag(0.3, 1.0), ph(-oracle::pi, oracle::pi);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    t.e00[i] = oracle::random_disk(rng, 0.3);
    t.e11[i] = oracle::random_disk(rng, 0.5);
    t.e01e10[i] = std::polar(mag(rng), ph(rng));
  }
  return t;
}

}  // namespace

TEST(Resample, IdenticalGrid) {
  const auto g = band(5);
  VectorXc<double> v(5);
  v << cd(1, 2), cd(3, 4), cd(5, 6), cd(7, 8), cd(9, 0);
  const ComplexTrace t(g, v);
  EXPECT_EQ(resample(t, g).values(), v);
}

TEST(Resample, Midpoint) {
  VectorX<double> f(2);
  f << 4e9, 8e9;
  VectorXc<double> v(2);
  v << cd(1, 0), cd(0, 1);
  const CalStandard s(StandardKind::Data, ComplexTrace(FrequencyGrid(f), v));
  const auto r = resample_standard(s, FrequencyGrid(VectorX<double>::Constant(1, 6e9)));
  EXPECT_NEAR(std::abs(r.known_gamma[0] - cd(0.5, 0.5)), 0.0, 1e-15);
  EXPECT_EQ(r.kind, StandardKind::Data);
}

TEST(Resample, OutsideBandIsRangeError) {
  const auto kit = ideal_kit(band());
  const auto g = FrequencyGrid(VectorX<double>::Constant(1, 3.85e9));
  try {
    resample_standard(kit[0], g);
    FAIL();
  } catch (const RangeError& e) {
    EXPECT_NE(std::string(e.what()).find("outside the calibration bandwidth"), std::string::npos);
  }
  EXPECT_THROW(resample_kit(kit, FrequencyGrid::linspace(7e9, 9e9, 5)), RangeError);
}

TEST(Resample, LinearDataIsExact) {
  const auto coarse = band(9);
  VectorXc<double> v(9);
  for (Eigen::Index i = 0; i < 9; ++i) v[i] = cd(0.1, -0.2) * (coarse[i] / 1e9) + cd(0.3, 0.1);
  const auto fine = FrequencyGrid::linspace(4.1e9, 7.9e9, 33);
  const auto r = resample(ComplexTrace(coarse, v), fine);
  for (Eigen::Index i = 0; i < fine.size(); ++i)
    EXPECT_NEAR(std::abs(r[i] - (cd(0.1, -0.2) * (fine[i] / 1e9) + cd(0.3, 0.1))), 0.0, 1e-14);
}

TEST(Standard, ActiveDefinitionRejected) {
  EXPECT_THROW(CalStandard::flat(StandardKind::Open, band(), cd(1.01)), ParameterError);
  EXPECT_NO_THROW(CalStandard::flat(StandardKind::Open, band(), cd(1.0 + 5e-7)));
}

TEST(Kit, DuplicateKindsRejected) {
  const auto g = band();
  EXPECT_THROW(CalKit({CalStandard::flat(StandardKind::Open, g, cd(1)), CalStandard::flat(StandardKind::Open, g, cd(-1)),
                       CalStandard::flat(StandardKind::Load, g, cd(0))}),
               ParameterError);
}

TEST(Kit, CoincidentStandardsAreConditioningError) {
  const auto g = band();
  EXPECT_THROW(CalKit({CalStandard::flat(StandardKind::Open, g, cd(1)), CalStandard::flat(StandardKind::Short, g, cd(1)),
                       CalStandard::flat(StandardKind::Load, g, cd(0))}),
               ConditioningError);
}

TEST(Kit, ConditioningFloorIsConfigurable) {
  const auto g = band();
  const std::array stds{CalStandard::flat(StandardKind::Open, g, cd(1)), CalStandard::flat(StandardKind::Short, g, cd(0.95)),
                        CalStandard::flat(StandardKind::Load, g, cd(0))};
  EXPECT_THROW(CalKit(stds, CalKitMetadata{}), ConditioningError);
  EXPECT_NO_THROW(CalKit(stds, {}, 0.01));
}

TEST(Kit, GridMismatchRejected) {
  EXPECT_THROW(CalKit({CalStandard::flat(StandardKind::Open, band(21), cd(1)),
                       CalStandard::flat(StandardKind::Short, band(21), cd(-1)),
                       CalStandard::flat(StandardKind::Load, band(11), cd(0))}),
               ParameterError);
}

TEST(Kit, FindReportsAbsentKind) {
  const auto kit = ideal_kit(band());
  EXPECT_EQ(kit.find(StandardKind::Load).kind, StandardKind::Load);
  try {
    kit.find(StandardKind::Data);
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_STREQ(e.what(), "data standard absent");
  }
}

TEST(SolveSol, IdentityAdapter) {
  const auto kit = ideal_kit(band());
  const auto t = solve_sol({kit[0].known_gamma, kit[1].known_gamma, kit[2].known_gamma}, kit);
  EXPECT_LT(t.e00.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(t.e11.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.e01e10.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(SolveSol, RecoversKnownTerms) {
  const auto g = band();
  const auto kit = ideal_kit(g);
  const auto truth = OnePortErrorTerms::constant(g, cd(0.1, 0.05), cd(0, -0.2), cd(0.8));
  const auto res = solve_sol_detailed(measure(truth, kit), kit);
  EXPECT_LT((res.terms.e00 - truth.e00).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((res.terms.e11 - truth.e11).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((res.terms.e01e10 - truth.e01e10).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(res.residual.maxCoeff(), 1e-12);
}

TEST(SolveSol, MatchesClosedFormForIdealKit) {
  std::mt19937_64 rng(21);
  const auto g = band(15);
  const auto kit = ideal_kit(g);
  const auto truth = random_terms(rng, g);
  const auto m = measure(truth, kit);
  const auto t = solve_sol(m, kit);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const auto o = oracle::sol_ideal(m[0][i], m[1][i], m[2][i]);
    EXPECT_NEAR(std::abs(t.e00[i] - o.e00), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(t.e11[i] - o.e11), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(t.e01e10[i] - o.e01e10), 0.0, 1e-12);
  }
}

TEST(SolveSol, NonIdealDataStandards) {
  std::mt19937_64 rng(4);
  const auto g = band(31);
  VectorXc<double> o(g.size()), s(g.size()), l(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double ph = 0.3 * (g[i] - 4e9) / 4e9;
    o[i] = std::polar(0.99, -ph);
    s[i] = std::polar(0.98, oracle::pi - 1.3 * ph);
    l[i] = oracle::random_disk(rng, 0.05);
  }
  const CalKit kit({CalStandard(StandardKind::Open, ComplexTrace(g, o)), CalStandard(StandardKind::Short, ComplexTrace(g, s)),
                    CalStandard(StandardKind::Load, ComplexTrace(g, l))});
  const auto truth = random_terms(rng, g);
  const auto res = solve_sol_detailed(measure(truth, kit), kit);
  EXPECT_LT((res.terms.e00 - truth.e00).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((res.terms.e11 - truth.e11).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((res.terms.e01e10 - truth.e01e10).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(res.residual.maxCoeff(), 1e-12);
}

TEST(SolveSol, SingularSystemReportsFrequency) {
  const auto g = band(5);
  const CalKit kit({CalStandard::flat(StandardKind::Open, g, cd(1)), CalStandard::flat(StandardKind::Short, g, cd(1)),
                    CalStandard::flat(StandardKind::Load, g, cd(0))},
                   {}, 0.0);
  try {
    solve_sol({flat(g, cd(0.5)), flat(g, cd(0.5)), flat(g, cd(0.1))}, kit);
    FAIL();
  } catch (const ConditioningError& e) {
    EXPECT_DOUBLE_EQ(e.frequency(), 4e9);
  }
}

TEST(SolveSol, MisalignedMeasurementRejected) {
  const auto kit = ideal_kit(band());
  EXPECT_THROW(solve_sol({flat(band(), cd(1)), flat(band(), cd(-1)), flat(band(11), cd(0))}, kit), ParameterError);
}

TEST(ApplyCal, IdentityTerms) {
  std::mt19937_64 rng(2);
  const auto g = band();
  VectorXc<double> v(g.size());
  for (auto& x : v) x = oracle::random_disk(rng, 1.0);
  const ComplexTrace t(g, v);
  EXPECT_EQ(apply_cal(OnePortErrorTerms::identity(g), t).values(), v);
}

TEST(ApplyCal, RoundTripProperty) {
  std::mt19937_64 rng(17);
  const auto g = band(101);
  for (int k = 0; k < 50; ++k) {
    const auto terms = random_terms(rng, g);
    VectorXc<double> v(g.size());
    for (auto& x : v) x = oracle::random_disk(rng, 1.0);
    const ComplexTrace a(g, v);
    const auto back = apply_cal(terms, embed_error(terms, a));
    EXPECT_LT((back.values() - v).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ApplyCal, LoadMeasuresDirectivity) {
  std::mt19937_64 rng(8);
  const auto g = band();
  const auto terms = random_terms(rng, g);
  const auto m = embed_error(terms, flat(g, cd(0)));
  EXPECT_EQ(m.values(), terms.e00);
}

TEST(ApplyCal, ZeroDenominatorCarriesIndex) {
  const auto g = band(4);
  auto terms = OnePortErrorTerms::constant(g, cd(0), cd(1), cd(1));
  terms.e11[2] = cd(1);
  // d = m - e00, den = e01e10 + e11 d = 0 when m = -1
  VectorXc<double> m = VectorXc<double>::Constant(4, cd(0.2));
  m[2] = cd(-1);
  try {
    apply_cal(terms, ComplexTrace(g, m));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.index(), 2);
  }
}

TEST(Terms, ZeroTrackingRejected) {
  auto t = OnePortErrorTerms::identity(band(3));
  t.e01e10[1] = cd(0);
  EXPECT_THROW(t.validate(), NumericError);
}

TEST(Report, Decibels) {
  const auto g = band(3);
  const auto id = error_term_report(OnePortErrorTerms::identity(g));
  ASSERT_EQ(id.size(), 3u);
  EXPECT_EQ(id[0].e00_db, -200.0);
  EXPECT_EQ(id[0].e11_db, -200.0);
  EXPECT_NEAR(id[0].e01e10_db, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(id[1].frequency, 6e9);
  const auto t = error_term_report(OnePortErrorTerms::constant(g, cd(0.1), cd(std::pow(10.0, -30.0 / 20.0)), cd(1)));
  EXPECT_NEAR(t[0].e00_db, -20.0, 1e-12);
  EXPECT_NEAR(t[0].e11_db, -30.0, 1e-12);
  const auto custom = error_term_report(OnePortErrorTerms::identity(g), -150.0);
  EXPECT_EQ(custom[0].e00_db, -150.0);
}

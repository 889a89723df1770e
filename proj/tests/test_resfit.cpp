#include "oracles.hpp"

#include "resocal/circsim.hpp"
#include "resocal/resfit.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace resocal;
using namespace resocal::resfit;
using oracle::cd;

namespace {

struct Truth {
  double f0 = 6e9, q = 1e5, qc = 2e5, theta = 0.0, k = 1.0;
  cd a{1.0, 0.0};
  double delay = 0.0;
};

ComplexTrace synth(const Truth& t, double linewidths = 20, int n = 2001, double noise = 0, unsigned seed = 1) {
  const double w = t.f0 / t.q;
  const auto g = FrequencyGrid::linspace(t.f0 - linewidths * w, t.f0 + linewidths * w, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise / std::sqrt(2.0));
  VectorXc<double> v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = g[i];
    v[i] = t.a * std::exp(-oracle::j * 2.0 * oracle::pi * f * t.delay) *
           oracle::lineshape(f, t.f0, t.q, t.qc, t.theta, t.k);
    if (noise > 0) v[i] += cd(nd(rng), nd(rng));
  }
  return ComplexTrace(g, v);
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Preprocess, ZeroDelayUnitBaseline) {
  const auto p = preprocess(synth({}));
  EXPECT_LT(std::abs(p.delay), 1e-12);
  EXPECT_NEAR(p.baseline_a, 1.0, 1e-9);
}

TEST(Preprocess, RecoversInjectedDelay) {
  Truth t;
  t.delay = 1e-9;
  t.q = 1e4;  // wide span so the delay winds noticeably
  t.qc = 2e4;
  const auto p = preprocess(synth(t));
  EXPECT_LT(rel(p.delay, 1e-9), 1e-3);
}

TEST(Preprocess, NormalizesOffResonancePoint) {
  Truth t;
  t.a = std::polar(0.37, 1.1);
  const auto p = preprocess(synth(t));
  for (Eigen::Index i = 0; i < p.trace.size(); i += 50) {
    const double f = p.trace.frequency(i);
    EXPECT_LT(std::abs(p.trace[i] - oracle::lineshape(f, t.f0, t.q, t.qc, t.theta, t.k)), 1e-8) << f;
  }
  EXPECT_NEAR(p.baseline_a, 0.37, 1e-9);
}

TEST(Preprocess, InsufficientSpanIsRangeError) {
  EXPECT_THROW(preprocess(synth({}, 2.0)), RangeError);
}

TEST(Preprocess, FlatTraceHasNoResonance) {
  Truth t;
  t.qc = 1e30;
  EXPECT_THROW(preprocess(synth(t, 20, 2001, 1e-3)), FitError);
}

TEST(CircleFit, UnitCircle) {
  std::vector<cd> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(std::polar(1.0, 0.157 * i));
  const auto c = circle_fit(pts);
  EXPECT_LT(std::abs(c.center), 1e-12);
  EXPECT_NEAR(c.radius, 1.0, 1e-12);
}

TEST(CircleFit, DiameterIsQOverQc) {
  Truth t;
  t.q = 1e5;
  t.qc = 2e5;
  const auto c = circle_fit(synth(t).values());
  EXPECT_NEAR(c.radius, 0.25, 1e-10);
  EXPECT_NEAR(std::abs(c.center - cd(0.75)), 0.0, 1e-10);
}

TEST(CircleFit, ThreePointsExact) {
  const cd a(0.3, -1.2), b(2.5, 0.4), c(-0.7, 1.9);
  const auto fit = circle_fit(std::vector<cd>{a, b, c});
  const auto o = oracle::circumcircle(a, b, c);
  EXPECT_NEAR(std::abs(fit.center - o.center), 0.0, 1e-12);
  EXPECT_NEAR(fit.radius, o.radius, 1e-12);
}

TEST(CircleFit, Degenerate) {
  EXPECT_THROW(circle_fit(std::vector<cd>{cd(0, 0), cd(1, 1), cd(2, 2), cd(3, 3), cd(4, 4)}), FitError);
  EXPECT_THROW(circle_fit(std::vector<cd>{cd(0, 0), cd(1, 1)}), FitError);
}

TEST(PhaseFit, RecoversQAndF0) {
  Truth t;
  t.q = 1e5;
  const auto tr = synth(t);
  const auto c = circle_fit(tr.values());
  const auto p = phase_fit(tr, c.center);
  EXPECT_LT(rel(p.q_total, 1e5), 1e-3);
  EXPECT_NEAR(p.f0, 6e9, 1.0);
}

TEST(PhaseFit, MirroredTraceKeepsF0) {
  Truth t;
  t.theta = 0.3;
  const auto tr = synth(t);
  VectorXc<double> m = tr.values().reverse();
  const ComplexTrace mirrored(tr.grid(), m);
  const auto a = phase_fit(tr, circle_fit(tr.values()).center);
  const auto b = phase_fit(mirrored, circle_fit(mirrored.values()).center);
  EXPECT_NEAR(a.f0, b.f0, 1.0);
  EXPECT_LT(rel(a.q_total, b.q_total), 1e-6);
}

TEST(PhaseFit, PureNoiseFails) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0, 1);
  const auto g = FrequencyGrid::linspace(5.9e9, 6.1e9, 501);
  VectorXc<double> v(501);
  for (auto& x : v) x = cd(nd(rng), nd(rng));
  EXPECT_THROW(phase_fit(ComplexTrace(g, v), cd(0)), FitError);
}

TEST(FitHanger, SelfConsistencyNoiseFree) {
  for (double theta : {0.0, 0.4, -0.7}) {
    Truth t;
    t.theta = theta;
    t.a = std::polar(0.8, 2.0);
    t.delay = 3e-9;
    const auto r = fit_hanger(synth(t));
    EXPECT_LT(std::abs(r.f0 - t.f0) / t.f0, 1e-3 / t.q) << theta;
    EXPECT_LT(rel(r.q_total, t.q), 1e-3) << theta;
    EXPECT_LT(rel(r.q_coupling * std::cos(r.theta), t.qc), 1e-3) << theta;
    EXPECT_NEAR(r.theta, theta, 1e-3) << theta;
    EXPECT_NEAR(r.baseline_a, 0.8, 1e-6);
    const double qi = 1.0 / (1.0 / t.q - std::cos(theta) / t.qc);
    EXPECT_LT(rel(r.q_internal, qi), 1e-3) << theta;
  }
}

TEST(FitReflection, SelfConsistencyNoiseFree) {
  Truth t;
  t.k = 2.0;
  t.q = 5e4;
  t.qc = 7e4;
  t.theta = 0.1;
  t.a = std::polar(0.5, -1.0);
  const auto r = fit_reflection(synth(t), ReflectionCorrection::None);
  EXPECT_LT(rel(r.q_total, t.q), 1e-3);
  EXPECT_LT(rel(r.q_coupling, t.qc), 1e-3);
  EXPECT_NEAR(r.theta, 0.1, 1e-3);
  EXPECT_NEAR(r.diameter, 2.0 * t.q / t.qc, 1e-6);
  EXPECT_EQ(r.mode, FitMode::Reflection);
}

TEST(FitHanger, NoisyWithinThreeSigma) {
  Truth t;
  t.theta = 0.25;
  t.a = std::polar(0.9, 0.5);
  const auto tr = synth(t, 20, 2001, 0.01, 1234);  // 40 dB SNR
  const auto r = fit_hanger(tr);
  EXPECT_LT(std::abs(r.f0 - t.f0), 3 * r.errors.f0);
  EXPECT_LT(std::abs(r.q_total - t.q), 3 * r.errors.q_total);
  EXPECT_LT(std::abs(r.theta - t.theta), 3 * r.errors.theta);
  EXPECT_LT(std::abs(r.q_coupling - t.qc / std::cos(t.theta)), 3 * r.errors.q_coupling);
  EXPECT_GT(r.errors.q_total, 0.0);
}

TEST(FitReflection, NoisyWithinThreeSigma) {
  Truth t;
  t.k = 2.0;
  t.q = 4e4;
  t.qc = 6e4;
  const auto tr = synth(t, 20, 2001, 0.01, 77);
  const auto r = fit_reflection(tr);
  EXPECT_LT(std::abs(r.f0 - t.f0), 3 * r.errors.f0);
  EXPECT_LT(std::abs(r.q_total - t.q), 3 * r.errors.q_total);
  EXPECT_LT(std::abs(r.q_coupling - t.qc), 3 * r.errors.q_coupling);
  EXPECT_LT(std::abs(r.theta - t.theta), 3 * r.errors.theta);
}

TEST(FitHanger, DcmAndNaiveAgreeWithoutRotation) {
  const auto tr = synth({});
  const auto d = fit_hanger(tr, HangerCorrection::Dcm);
  const auto n = fit_hanger(tr, HangerCorrection::Naive);
  EXPECT_LT(rel(d.q_internal, n.q_internal), 1e-12);
  EXPECT_EQ(n.mode, FitMode::HangerNaive);
}

TEST(FitHanger, Fig8DcmRecoversDesignedQi) {
  const auto spec = circsim::fig8_preset(90, 90, 1e8);
  const auto tr = circsim::simulate(spec, circsim::resonance_grid(spec));
  const auto d = fit_hanger(tr, HangerCorrection::Dcm);
  const auto n = fit_hanger(tr, HangerCorrection::Naive);
  EXPECT_LT(rel(d.q_internal, 2.2e6), 0.01);
  EXPECT_GT(n.q_internal, 2.2e6 * 1.05);
}

TEST(FitHanger, DcmInvarianceAcrossLineLengths) {
  std::vector<std::pair<double, double>> naive;  // (|theta|, Qi)
  double lo = 1e300, hi = 0;
  for (double l3 = 90; l3 <= 120; l3 += 5) {
    const auto spec = circsim::fig8_preset(l3, 90, 1e8);
    const auto tr = circsim::simulate(spec, circsim::resonance_grid(spec));
    const auto d = fit_hanger(tr, HangerCorrection::Dcm);
    const auto n = fit_hanger(tr, HangerCorrection::Naive);
    lo = std::min(lo, d.q_internal);
    hi = std::max(hi, d.q_internal);
    naive.emplace_back(std::abs(n.theta), n.q_internal);
  }
  EXPECT_LT((hi - lo) / lo, 0.02);
  std::sort(naive.begin(), naive.end());
  for (std::size_t i = 1; i < naive.size(); ++i) EXPECT_GT(naive[i].second, naive[i - 1].second);
}

TEST(FitReflection, MismatchNeverUnderestimates) {
  for (double l3 : {0.0, 45.0}) {
    const auto spec = circsim::fig2_preset(l3);
    const auto r = fit_reflection(circsim::simulate(spec, circsim::resonance_grid(spec)));
    EXPECT_TRUE(r.q_internal > 2.2e6 || (r.q_internal < 0 && r.pathology)) << l3 << " " << r.q_internal;
  }
}

TEST(FitReflection, NegativeQiIsFlaggedNotClamped) {
  const auto spec = circsim::fig2_preset(0);
  const auto r = fit_reflection(circsim::simulate(spec, circsim::resonance_grid(spec)));
  EXPECT_LT(r.q_internal, 0.0);
  EXPECT_TRUE(r.pathology);
}

TEST(FitReflection, LosslessDiameterIsTwo) {
  const auto spec = circsim::table1_preset(300, 1e12);
  const auto r = fit_reflection(circsim::simulate(spec, circsim::resonance_grid(spec)));
  EXPECT_NEAR(r.diameter, 2.0, 1e-3);
}

TEST(Fit, DispatchMatchesModes) {
  const auto tr = synth({});
  EXPECT_EQ(fit(tr, FitMode::HangerDcm).mode, FitMode::HangerDcm);
  EXPECT_EQ(fit(tr, FitMode::HangerNaive).mode, FitMode::HangerNaive);
  EXPECT_STREQ(to_string(FitMode::ReflectionDcm), "reflection_dcm");
}

TEST(ThetaMax, Values) {
  EXPECT_EQ(theta_max(1.0), 0.0);
  EXPECT_NEAR(theta_max(0.9), 0.4510, 5e-5);
  EXPECT_NEAR(theta_max(0.5), 1.0472, 5e-5);
  EXPECT_THROW(theta_max(0.0), ParameterError);
  EXPECT_THROW(theta_max(1.2), ParameterError);
}

TEST(PhotonNumber, Values) {
  PhotonNumberParams p{50, 50, 3e5, 3e5, 6.03e9, 0.0};
  EXPECT_EQ(photon_number(p), 0.0);
  p.p_app = dbm_to_watts(-85);
  EXPECT_NEAR(p.p_app, 3.162e-12, 1e-15);
  const double n = photon_number(p);
  EXPECT_LT(rel(n, 1.26e7), 0.01);
  EXPECT_LT(rel(n, oracle::photons(6.03e9, 50, 50, 3e5, 3e5, p.p_app)), 1e-12);
}

TEST(PhotonNumber, Scaling) {
  PhotonNumberParams p{50, 50, 1e5, 3e5, 5e9, 1e-15};
  const double n1 = photon_number(p);
  p.q_total *= 2;
  EXPECT_NEAR(photon_number(p) / n1, 4.0, 1e-12);
  p.q_total /= 2;
  for (double k : {0.5, 3.0, 1e3}) {
    PhotonNumberParams q = p;
    q.p_app *= k;
    EXPECT_NEAR(photon_number(q) / n1, k, 1e-12 * k);
  }
  p.zr = 0;
  EXPECT_THROW(photon_number(p), ParameterError);
}

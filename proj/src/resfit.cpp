#include "resocal/resfit.hpp"

#include "resocal/lm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace resocal::resfit {

namespace {

using cd = std::complex<double>;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

std::vector<double> unwrap(std::span<const double> phase) {
  std::vector<double> out(phase.begin(), phase.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = out[i - 1] + wrap_angle(phase[i] - phase[i - 1]);
  return out;
}

Eigen::Index edge_count(Eigen::Index n, double fraction) {
  const auto k = static_cast<Eigen::Index>(std::lround(fraction * static_cast<double>(n)));
  return std::max<Eigen::Index>(k, 2);
}

struct Linewidth {
  Eigen::Index peak = 0;
  double f_peak = 0;
  double fwhm = 0;
};

/// FWHM of |z - baseline|^2, which is Lorentzian for any circle rotation.
Linewidth estimate_linewidth(const ComplexTrace& t, cd baseline, std::optional<double> f_hint) {
  const Eigen::Index n = t.size();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = std::norm(t[i] - baseline);

  Eigen::Index peak = 0;
  if (f_hint) {
    const auto& f = t.grid().points();
    Eigen::Index near = 0;
    (f.array() - *f_hint).abs().minCoeff(&near);
    // climb to the local maximum nearest the hint
    peak = near;
    while (peak > 0 && y[peak - 1] > y[peak]) --peak;
    while (peak + 1 < n && y[peak + 1] > y[peak]) ++peak;
  } else {
    y.maxCoeff(&peak);
  }
  const double half = 0.5 * y[peak];
  auto crossing = [&](Eigen::Index step) -> std::optional<double> {
    for (Eigen::Index i = peak; i + step >= 0 && i + step < n; i += step) {
      const Eigen::Index j = i + step;
      if (y[j] <= half) {
        const double t_ = (y[i] - half) / (y[i] - y[j]);
        return t.frequency(i) + t_ * (t.frequency(j) - t.frequency(i));
      }
    }
    return std::nullopt;
  };
  const auto lo = crossing(-1), hi = crossing(+1);
  if (!lo || !hi)
    throw RangeError("trace does not span the resonance linewidth; widen the frequency span");
  return {peak, t.frequency(peak), *hi - *lo};
}

/// Point-to-point noise estimate (per complex component).
double noise_sigma(const ComplexTrace& t) {
  double acc = 0;
  for (Eigen::Index i = 1; i < t.size(); ++i) acc += std::norm(t[i] - t[i - 1]);
  return std::sqrt(acc / (2.0 * static_cast<double>(std::max<Eigen::Index>(t.size() - 1, 1))) / 2.0);
}

ComplexTrace rotate_delay(const ComplexTrace& t, double tau, cd divide_by = cd(1.0, 0.0)) {
  VectorXc<double> v(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i)
    v[i] = t[i] * std::polar(1.0, 2.0 * kPi * t.frequency(i) * tau) / divide_by;
  return ComplexTrace(t.grid(), std::move(v));
}

double circle_rms_with_delay(const ComplexTrace& t, double tau) {
  VectorXc<double> v(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) v[i] = t[i] * std::polar(1.0, 2.0 * kPi * t.frequency(i) * tau);
  try {
    return circle_fit(v).rms_residual;
  } catch (const FitError&) {
    return std::numeric_limits<double>::infinity();
  }
}

template <typename Fn>
double golden_minimize(Fn&& fn, double lo, double hi, int iterations = 120) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int i = 0; i < iterations && (b - a) > 1e-15 * (std::abs(a) + std::abs(b)) + 1e-300; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = fn(d);
    }
  }
  return fc < fd ? c : d;
}

struct PhaseInit {
  double f0;
  double q;
  double theta0;
};

PhaseFit run_phase_fit(const ComplexTrace& t, cd center, const PhaseInit& init, const FitOptions& opt) {
  const Eigen::Index n = t.size();
  Eigen::VectorXd ang(n);
  for (Eigen::Index i = 0; i < n; ++i) ang[i] = std::arg(t[i] - center);
  const auto& f = t.grid().points();
  const double f0_ref = init.f0;

  auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(n);
    const double f0 = f0_ref + x[2];
    for (Eigen::Index i = 0; i < n; ++i)
      r[i] = wrap_angle(ang[i] - (x[0] + 2.0 * std::atan(2.0 * x[1] * (1.0 - f[i] / f0))));
    return r;
  };
  const double q_abs = std::abs(init.q);
  Eigen::VectorXd x0(3), scale(3);
  x0 << init.theta0, init.q, 0.0;
  scale << 1.0, q_abs, f0_ref / q_abs;
  lm::Options<double> lo;
  lo.max_iterations = opt.max_iterations;
  lo.step_tolerance = opt.step_tolerance;
  const auto res = lm::minimize<double>(residual, x0, scale, lo);

  const double rms = std::sqrt(res.residual.squaredNorm() / static_cast<double>(n));
  const double f0 = f0_ref + res.x[2];
  if (!res.converged || !(res.x[1] * init.q > 0) || rms > opt.max_phase_rms || f0 < t.grid().front() ||
      f0 > t.grid().back())
    throw FitError("phase fit did not converge (rms phase residual " + std::to_string(rms) + " rad after " +
                   std::to_string(res.iterations) + " iterations)");
  return {f0, std::abs(res.x[1]), wrap_angle(res.x[0]), rms, res.iterations};
}

PhaseInit phase_initial_guess(const ComplexTrace& t, cd center, std::optional<Linewidth> lw) {
  const Eigen::Index n = t.size();
  const Eigen::Index k = std::max<Eigen::Index>(n / 10, 1);
  cd edge{0.0, 0.0};
  for (Eigen::Index i = 0; i < k; ++i) edge += t[i] + t[n - 1 - i];
  edge /= static_cast<double>(2 * k);
  double r = 0;
  for (Eigen::Index i = 0; i < n; ++i) r += std::abs(t[i] - center);
  r /= static_cast<double>(n);
  const cd dir = edge - center;
  const cd off = center + (std::abs(dir) > 0 ? r * dir / std::abs(dir) : cd(r, 0));
  const Linewidth l = lw ? *lw : estimate_linewidth(t, off, std::nullopt);
  // the model phase falls with frequency; a rising phase means a mirrored trace
  double turn = 0;
  for (Eigen::Index i = 1; i < n; ++i) turn += wrap_angle(std::arg(t[i] - center) - std::arg(t[i - 1] - center));
  const double sign = turn > 0 ? -1.0 : 1.0;
  return {l.f_peak, sign * l.f_peak / l.fwhm, wrap_angle(std::arg(off - center) + kPi)};
}

}  // namespace

const char* to_string(FitMode m) {
  switch (m) {
    case FitMode::HangerDcm: return "hanger_dcm";
    case FitMode::HangerNaive: return "hanger_naive";
    case FitMode::Reflection: return "reflection";
    case FitMode::ReflectionDcm: return "reflection_dcm";
  }
  return "?";
}

std::complex<double> lineshape(double f, double f0, double q, double qc, double theta, double k) {
  return 1.0 - k * (q / qc) * std::polar(1.0, theta) / cd(1.0, 2.0 * q * (f - f0) / f0);
}

// ---------------------------------------------------------------------------

CircleFit circle_fit(std::span<const std::complex<double>> pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (n < 3) throw FitError("circle fit needs at least 3 points");
  cd mean{0, 0};
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(n);

  Eigen::VectorXd xs(n), ys(n), zs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xs[i] = pts[static_cast<std::size_t>(i)].real() - mean.real();
    ys[i] = pts[static_cast<std::size_t>(i)].imag() - mean.imag();
    zs[i] = xs[i] * xs[i] + ys[i] * ys[i];
  }
  const double zmean = zs.mean();
  if (!(zmean > 0)) throw FitError("circle fit: all points coincide");
  const double zscale = 2.0 * std::sqrt(zmean);

  // Taubin fit via SVD of [ (z - zmean)/(2 sqrt(zmean)), x, y ]
  Eigen::MatrixXd m(n, 3);
  m.col(0) = (zs.array() - zmean) / zscale;
  m.col(1) = xs;
  m.col(2) = ys;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  Eigen::Vector3d a = svd.matrixV().col(2);
  const double a0 = a[0] / zscale;
  const double a3 = -zmean * a0;

  const double extent = std::sqrt(zmean);
  if (std::abs(a0) * extent < 1e-10 * std::hypot(a[1], a[2]))
    throw FitError("circle fit: points are collinear");
  const cd c{-a[1] / (2.0 * a0), -a[2] / (2.0 * a0)};
  const double rad2 = a[1] * a[1] + a[2] * a[2] - 4.0 * a0 * a3;
  if (!(rad2 > 0)) throw FitError("circle fit: degenerate circle");
  const double radius = std::sqrt(rad2) / (2.0 * std::abs(a0));
  if (!std::isfinite(radius) || radius > 1e8 * extent) throw FitError("circle fit: points are collinear");

  double ss = 0;
  for (const auto& p : pts) {
    const double e = std::abs(p - mean - c) - radius;
    ss += e * e;
  }
  return {c + mean, radius, std::sqrt(ss / static_cast<double>(n))};
}

CircleFit circle_fit(const VectorXc<double>& points) {
  return circle_fit(std::span<const std::complex<double>>(points.data(), static_cast<std::size_t>(points.size())));
}

// ---------------------------------------------------------------------------

PreprocessResult preprocess(const ComplexTrace& trace, std::optional<double> f0_guess, const PreprocessOptions& opt) {
  const Eigen::Index n = trace.size();
  if (!(opt.edge_fraction > 0 && opt.edge_fraction < 0.5))
    throw ParameterError("edge fraction must be in (0, 0.5)");
  if (n < 10) throw RangeError("trace has too few points to fit a resonance");
  const Eigen::Index k = edge_count(n, opt.edge_fraction);
  if (2 * k >= n) throw RangeError("trace has too few points for the edge fraction");

  // Common slope, separate intercepts, weights |s|^2, each edge unwrapped on its own.
  double num = 0, den = 0;
  for (int side = 0; side < 2; ++side) {
    const Eigen::Index start = side == 0 ? 0 : n - k;
    std::vector<double> ph(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) ph[static_cast<std::size_t>(i)] = std::arg(trace[start + i]);
    const auto uw = unwrap(ph);
    double sw = 0, sx = 0, sy = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double w = std::norm(trace[start + i]);
      sw += w;
      sx += w * trace.frequency(start + i);
      sy += w * uw[static_cast<std::size_t>(i)];
    }
    if (!(sw > 0)) continue;
    const double mx = sx / sw, my = sy / sw;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double w = std::norm(trace[start + i]);
      const double dx = trace.frequency(start + i) - mx;
      num += w * dx * (uw[static_cast<std::size_t>(i)] - my);
      den += w * dx * dx;
    }
  }
  double tau = den > 0 ? -num / den / (2.0 * kPi) : 0.0;

  {
    const ComplexTrace coarse = rotate_delay(trace, tau);
    cd edge{0, 0};
    for (Eigen::Index i = 0; i < k; ++i) edge += coarse[i] + coarse[n - 1 - i];
    edge /= static_cast<double>(2 * k);
    double peak = 0;
    for (Eigen::Index i = 0; i < n; ++i) peak = std::max(peak, std::abs(coarse[i] - edge));
    if (!(peak > 10.0 * noise_sigma(coarse))) throw FitError("resonance not found above the noise floor");
  }

  if (opt.refine_delay) {
    const double span = trace.grid().back() - trace.grid().front();
    const double half = 0.5 / span;
    constexpr int kScan = 200;
    double best = tau, best_val = circle_rms_with_delay(trace, tau);
    for (int i = 0; i <= kScan; ++i) {
      const double t = tau - half + 2.0 * half * i / kScan;
      const double v = circle_rms_with_delay(trace, t);
      if (v < best_val) {
        best_val = v;
        best = t;
      }
    }
    const double step = 2.0 * half / kScan;
    tau = golden_minimize([&](double t) { return circle_rms_with_delay(trace, t); }, best - step, best + step);
  }

  const ComplexTrace undelayed = rotate_delay(trace, tau);
  cd off{0, 0};
  for (Eigen::Index i = 0; i < k; ++i) off += undelayed[i] + undelayed[n - 1 - i];
  off /= static_cast<double>(2 * k);
  if (std::abs(off) == 0.0) throw FitError("off-resonance level is zero");

  const Linewidth lw = estimate_linewidth(undelayed, off, f0_guess);

  // The edge average sits slightly inside the circle; the point opposite the
  // resonance on the fitted circle is the exact off-resonance level.
  try {
    const CircleFit circ = circle_fit(undelayed.values());
    const FitOptions fo;
    const PhaseFit ph = run_phase_fit(undelayed, circ.center, phase_initial_guess(undelayed, circ.center, lw), fo);
    const cd p = circ.center - circ.radius * std::polar(1.0, ph.theta0);
    if (std::abs(p) > 0 && std::abs(p - off) < 0.5 * std::abs(off)) off = p;
  } catch (const FitError&) {
  }
  const double span = trace.grid().back() - trace.grid().front();
  if (span < opt.min_linewidths * lw.fwhm)
    throw RangeError("trace spans " + std::to_string(span / lw.fwhm) + " linewidths; at least " +
                     std::to_string(opt.min_linewidths) + " required");

  PreprocessResult out;
  out.trace = rotate_delay(trace, tau, off);
  out.delay = tau;
  out.baseline_a = std::abs(off);
  out.off_resonance_point = off;
  out.f0_estimate = lw.f_peak;
  out.linewidth_estimate = lw.fwhm;
  return out;
}

PhaseFit phase_fit(const ComplexTrace& trace, std::complex<double> center) {
  const FitOptions opt;
  const auto init = phase_initial_guess(trace, center, std::nullopt);
  return run_phase_fit(trace, center, init, opt);
}

// ---------------------------------------------------------------------------

namespace {

struct Correction {
  double k;       // 1 hanger, 2 reflection
  bool dcm;
  FitMode mode;
};

ResonatorFitResult fit_impl(const ComplexTrace& trace, const Correction& corr, const FitOptions& opt) {
  const PreprocessResult pre = preprocess(trace, std::nullopt, opt.preprocess);
  const ComplexTrace& t = pre.trace;
  const CircleFit circ = circle_fit(t.values());

  Linewidth lw;
  lw.f_peak = pre.f0_estimate;
  lw.fwhm = pre.linewidth_estimate;
  PhaseInit init = phase_initial_guess(t, circ.center, lw);
  const PhaseFit ph = run_phase_fit(t, circ.center, init, opt);

  const cd p_circ = circ.center - circ.radius * std::polar(1.0, ph.theta0);
  const cd cn = circ.center / p_circ;
  const double theta_init = std::arg(1.0 - cn);
  const double d_init = 2.0 * circ.radius / std::abs(p_circ);
  const double qc_init = corr.k * ph.q_total / d_init;

  const Eigen::Index n = t.size();
  const auto& f = t.grid().points();
  const double fc = 0.5 * (f[0] + f[n - 1]);
  const double span = f[n - 1] - f[0];
  const double f0_ref = ph.f0;

  // x = [Re a, Im a, tau, df0, Q, Qc, theta]
  auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(2 * n);
    const cd a{x[0], x[1]};
    const double f0 = f0_ref + x[3];
    for (Eigen::Index i = 0; i < n; ++i) {
      const cd m = a * std::polar(1.0, -2.0 * kPi * (f[i] - fc) * x[2]) * lineshape(f[i], f0, x[4], x[5], x[6], corr.k);
      const cd e = m - t[i];
      r[i] = e.real();
      r[n + i] = e.imag();
    }
    return r;
  };
  Eigen::VectorXd x0(7), scale(7);
  x0 << p_circ.real(), p_circ.imag(), 0.0, 0.0, ph.q_total, qc_init, theta_init;
  scale << 1.0, 1.0, 1.0 / (2.0 * kPi * span), f0_ref / ph.q_total, ph.q_total, qc_init, 1.0;
  lm::Options<double> lo;
  lo.max_iterations = opt.max_iterations;
  lo.step_tolerance = opt.step_tolerance;
  const auto res = lm::minimize<double>(residual, x0, scale, lo);
  if (!res.converged)
    throw FitError("joint refinement did not converge after " + std::to_string(res.iterations) + " iterations");

  const Eigen::VectorXd& x = res.x;
  const double q = x[4], qc_fit = x[5];
  const double f0 = f0_ref + x[3];
  if (!(q > 0) || !(qc_fit > 0)) throw FitError("fit produced non-positive Q or Qc");
  if (f0 < f[0] || f0 > f[n - 1]) throw FitError("fitted f0 lies outside the frequency span");
  const double theta = wrap_angle(x[6]);
  const cd a{x[0], x[1]};

  ResonatorFitResult out;
  out.mode = corr.mode;
  out.f0 = f0;
  out.q_total = q;
  out.theta = theta;
  out.diameter = corr.k * q / qc_fit;
  out.delay = pre.delay + x[2];
  out.baseline_a = std::abs(a) * pre.baseline_a;
  out.off_resonance = a * pre.off_resonance_point * std::polar(1.0, -2.0 * kPi * f0 * pre.delay) *
                      std::polar(1.0, -2.0 * kPi * (f0 - fc) * x[2]);
  const double c = corr.dcm ? std::cos(theta) : 1.0;
  out.q_coupling = qc_fit / c;
  const double inv_qi = 1.0 / q - c / qc_fit;
  out.q_internal = 1.0 / inv_qi;
  out.pathology = !(out.q_internal > 0) || !std::isfinite(out.q_internal);
  out.rms_residual = std::sqrt(res.residual.squaredNorm() / static_cast<double>(n));
  out.iterations = res.iterations;

  const Eigen::MatrixXd cov = res.covariance();
  auto var_of = [&](const Eigen::VectorXd& g) { return std::max(0.0, g.dot(cov * g)); };
  Eigen::VectorXd g = Eigen::VectorXd::Zero(7);
  out.errors.f0 = std::sqrt(std::max(0.0, cov(3, 3)));
  out.errors.q_total = std::sqrt(std::max(0.0, cov(4, 4)));
  out.errors.theta = std::sqrt(std::max(0.0, cov(6, 6)));
  if (std::abs(a) > 0) {
    g.setZero();
    g[0] = a.real() / std::abs(a);
    g[1] = a.imag() / std::abs(a);
    out.errors.baseline_a = pre.baseline_a * std::sqrt(var_of(g));
  }
  g.setZero();
  g[5] = 1.0 / c;
  if (corr.dcm) g[6] = qc_fit * std::sin(theta) / (c * c);
  out.errors.q_coupling = std::sqrt(var_of(g));
  g.setZero();
  g[4] = -1.0 / (q * q);
  g[5] = c / (qc_fit * qc_fit);
  if (corr.dcm) g[6] = std::sin(theta) / qc_fit;
  out.errors.q_internal = out.q_internal * out.q_internal * std::sqrt(var_of(g));
  return out;
}

}  // namespace

ResonatorFitResult fit_hanger(const ComplexTrace& trace, HangerCorrection correction, const FitOptions& opt) {
  const bool dcm = correction == HangerCorrection::Dcm;
  return fit_impl(trace, {1.0, dcm, dcm ? FitMode::HangerDcm : FitMode::HangerNaive}, opt);
}

ResonatorFitResult fit_reflection(const ComplexTrace& trace, ReflectionCorrection correction,
                                  const FitOptions& opt) {
  const bool dcm = correction == ReflectionCorrection::Dcm;
  return fit_impl(trace, {2.0, dcm, dcm ? FitMode::ReflectionDcm : FitMode::Reflection}, opt);
}

ResonatorFitResult fit(const ComplexTrace& trace, FitMode mode, const FitOptions& opt) {
  switch (mode) {
    case FitMode::HangerDcm: return fit_hanger(trace, HangerCorrection::Dcm, opt);
    case FitMode::HangerNaive: return fit_hanger(trace, HangerCorrection::Naive, opt);
    case FitMode::Reflection: return fit_reflection(trace, ReflectionCorrection::None, opt);
    case FitMode::ReflectionDcm: return fit_reflection(trace, ReflectionCorrection::Dcm, opt);
  }
  throw ParameterError("unknown fit mode");
}

double theta_max(double a) {
  if (!(a > 0.0 && a <= 1.0)) throw ParameterError("theta_max needs 0 < A <= 1");
  return std::acos(a);
}

double photon_number(const PhotonNumberParams& p) {
  if (!(p.z0 > 0) || !(p.zr > 0) || !(p.q_total > 0) || !(p.q_coupling > 0) || !(p.f0 > 0) || p.p_app < 0)
    throw ParameterError("photon number parameters must be positive");
  const double w0 = 2.0 * kPi * p.f0;
  return 2.0 / (kHbar * w0 * w0) * (p.z0 / p.zr) * (p.q_total * p.q_total / p.q_coupling) * p.p_app;
}

}  // namespace resocal::resfit

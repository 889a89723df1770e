#include "resocal/tlsloss.hpp"

#include "resocal/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace resocal::tls {

void TlsParams::validate() const {
  if (!(f_q0 >= 0) || !std::isfinite(f_q0)) throw ParameterError("F/Qi0 must be >= 0");
  if (!(n_c > 0) || !std::isfinite(n_c)) throw ParameterError("critical photon number must be > 0");
  if (!(beta > 0) || !std::isfinite(beta)) throw ParameterError("beta must be > 0");
  if (!(q_other > 0)) throw ParameterError("Q_other must be > 0");
  if (!(f0 > 0)) throw ParameterError("f0 must be > 0");
  if (!(temperature > 0)) throw ParameterError("temperature must be > 0");
}

double thermal_factor(double f0, double temperature) {
  if (!(f0 > 0) || !(temperature > 0)) throw ParameterError("thermal factor needs f0 > 0 and T > 0");
  return std::tanh(kPlanck * f0 / (2.0 * kBoltzmann * temperature));
}

double tls_loss(const TlsParams& p, double n) {
  p.validate();
  if (!(n >= 0)) throw ParameterError("photon number must be >= 0");
  const double sat = std::sqrt(1.0 + std::pow(n / p.n_c, p.beta));
  return p.f_q0 * thermal_factor(p.f0, p.temperature) / sat + 1.0 / p.q_other;
}

namespace {

struct Plateaus {
  double low = 0;   // mean 1/Qi of the lowest-n group
  double high = 0;  // mean 1/Qi of the highest-n group
  double se = 0;    // standard error of (low - high)
};

Plateaus plateaus(const std::vector<LossPoint>& sorted) {
  const std::size_t k = std::max<std::size_t>(2, sorted.size() / 5);
  auto stats = [&](std::size_t begin) {
    double mean = 0;
    for (std::size_t i = 0; i < k; ++i) mean += sorted[begin + i].inv_qi;
    mean /= static_cast<double>(k);
    double var = 0;
    for (std::size_t i = 0; i < k; ++i) var += std::pow(sorted[begin + i].inv_qi - mean, 2);
    var /= static_cast<double>(k > 1 ? k - 1 : 1);
    return std::pair{mean, var};
  };
  const auto [lo, vlo] = stats(0);
  const auto [hi, vhi] = stats(sorted.size() - k);
  return {lo, hi, std::sqrt(vlo / static_cast<double>(k) + vhi / static_cast<double>(k))};
}

}  // namespace

TlsFitResult fit_tls(const LossSweep& sweep, double f0, double temperature, const TlsFitOptions& opt) {
  if (sweep.size() < 6) throw ParameterError("TLS fit needs at least 6 points");
  if (!(f0 > 0) || !(temperature > 0)) throw ParameterError("TLS fit needs f0 > 0 and T > 0");
  if (opt.fix_beta && !(*opt.fix_beta > 0)) throw ParameterError("fixed beta must be > 0");
  std::vector<LossPoint> pts = sweep;
  for (const auto& p : pts) {
    if (!(p.n > 0) || !std::isfinite(p.n)) throw ParameterError("photon numbers must be > 0");
    if (!(p.inv_qi > 0) || !std::isfinite(p.inv_qi)) throw ParameterError("loss values must be > 0");
    if (!(p.weight >= 0)) throw ParameterError("weights must be >= 0");
  }
  std::sort(pts.begin(), pts.end(), [](const LossPoint& a, const LossPoint& b) { return a.n < b.n; });
  if (pts.back().n < 100.0 * pts.front().n)
    throw ParameterError("TLS fit needs photon numbers spanning at least two decades");

  const Plateaus pl = plateaus(pts);
  const double diff = pl.low - pl.high;
  if (!(diff > 3.0 * pl.se) || !(diff > 1e-9 * pl.high))
    throw IdentifiabilityError(
        "low- and high-power plateaus are indistinguishable; n_c and F/Qi0 cannot be identified");

  const double tf = thermal_factor(f0, temperature);
  const double g0 = pl.high;
  const double fq0_init = diff / tf;
  // crossover: TLS part falls to 1/sqrt(2) of its low-power value
  double nc_init = std::sqrt(pts.front().n * pts.back().n);
  const double target = g0 + diff / std::sqrt(2.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i - 1].inv_qi >= target && pts[i].inv_qi < target) {
      const double t = (pts[i - 1].inv_qi - target) / (pts[i - 1].inv_qi - pts[i].inv_qi);
      nc_init = std::exp(std::log(pts[i - 1].n) + t * (std::log(pts[i].n) - std::log(pts[i - 1].n)));
      break;
    }
  }

  const bool free_beta = !opt.fix_beta.has_value();
  const double beta_fixed = opt.fix_beta.value_or(kDefaultBeta);
  const Eigen::Index np = free_beta ? 4 : 3;
  const auto m = static_cast<Eigen::Index>(pts.size());

  // x = [F/Qi0, ln n_c, 1/Q_other, (beta)]
  auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    const double beta = free_beta ? x[3] : beta_fixed;
    const double nc = std::exp(x[1]);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& p = pts[static_cast<std::size_t>(i)];
      const double model = x[0] * tf / std::sqrt(1.0 + std::pow(p.n / nc, beta)) + x[2];
      r[i] = std::sqrt(p.weight) * (model - p.inv_qi) / p.inv_qi;
    }
    return r;
  };
  Eigen::VectorXd x0(np), scale(np);
  x0.head(3) << fq0_init, std::log(nc_init), g0;
  scale.head(3) << fq0_init, 1.0, g0;
  if (free_beta) {
    x0[3] = kDefaultBeta;
    scale[3] = 1.0;
  }
  lm::Options<double> lo;
  lo.max_iterations = opt.max_iterations;
  lo.step_tolerance = opt.step_tolerance;
  const auto res = lm::minimize<double>(residual, x0, scale, lo);
  if (!res.converged)
    throw FitError("TLS fit did not converge after " + std::to_string(res.iterations) + " iterations");
  const Eigen::VectorXd& x = res.x;
  if (!(x[0] > 0) || !(x[2] > 0) || (free_beta && !(x[3] > 0)))
    throw FitError("TLS fit produced non-physical parameters");

  const Eigen::VectorXd se = res.standard_errors();
  TlsFitResult out;
  out.params.f_q0 = x[0];
  out.params.n_c = std::exp(x[1]);
  out.params.q_other = 1.0 / x[2];
  out.params.beta = free_beta ? x[3] : beta_fixed;
  out.params.f0 = f0;
  out.params.temperature = temperature;
  out.errors.f_q0 = se[0];
  out.errors.n_c = out.params.n_c * se[1];
  out.errors.q_other = se[2] / (x[2] * x[2]);
  out.errors.beta = free_beta ? se[3] : 0.0;
  out.beta_fixed = !free_beta;
  out.rms_relative_residual = std::sqrt(res.residual.squaredNorm() / static_cast<double>(m));
  out.iterations = res.iterations;
  return out;
}

std::string format_report(const std::vector<TlsFitResult>& fits) {
  std::string out = "f0_ghz,f_qi0_x1e5,f_qi0_x1e5_err,n_c,n_c_err,q_other_x1e-5,q_other_x1e-5_err,beta,beta_err,beta_fixed,temperature_k\n";
  char buf[512];
  for (const auto& f : fits) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%d,%.6g\n", f.params.f0 / 1e9,
                  f.params.f_q0 * 1e5, f.errors.f_q0 * 1e5, f.params.n_c, f.errors.n_c, f.params.q_other * 1e-5,
                  f.errors.q_other * 1e-5, f.params.beta, f.errors.beta, f.beta_fixed ? 1 : 0,
                  f.params.temperature);
    out += buf;
  }
  return out;
}

}  // namespace resocal::tls

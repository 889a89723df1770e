// Bounded-iteration damped least squares (Levenberg-Marquardt) on Eigen types.
#pragma once

#include "resocal/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace resocal::lm {

template <typename Scalar>
struct Options {
  int max_iterations = 200;
  Scalar step_tolerance = Scalar(1e-10);  // per component: |du| <= tol * (|x / scale| + 1)
  Scalar gradient_tolerance = Scalar(1e-16);
  Scalar diff_step = Scalar(1e-6);        // central-difference step, times scale
};

template <typename Scalar>
struct Result {
  VectorX<Scalar> x;
  VectorX<Scalar> residual;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jacobian;
  VectorX<Scalar> scale;
  Scalar cost = 0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;

  /// Residual-scaled inverse curvature: s^2 (J^T J)^-1, s^2 = |r|^2 / (m - n).
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance() const {
    const auto m = residual.size(), n = x.size();
    const Scalar dof = static_cast<Scalar>(std::max<Eigen::Index>(m - n, 1));
    const Scalar s2 = residual.squaredNorm() / dof;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const VectorX<Scalar> d = scale.size() == n ? scale : VectorX<Scalar>::Ones(n);
    const Mat js = jacobian * d.asDiagonal();
    const Mat jtj = js.transpose() * js;
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(jtj);
    return s2 * (d.asDiagonal() * cod.pseudoInverse() * d.asDiagonal());
  }

  VectorX<Scalar> standard_errors() const { return covariance().diagonal().cwiseMax(Scalar(0)).cwiseSqrt(); }
};

/// Central-difference Jacobian with per-parameter steps `diff_step * scale`.
template <typename Scalar, typename Fn>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> numeric_jacobian(Fn& fn, const VectorX<Scalar>& x,
                                                                       const VectorX<Scalar>& scale,
                                                                       Eigen::Index m, Scalar diff_step) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jac(m, x.size());
  VectorX<Scalar> xp = x, xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const Scalar h = diff_step * scale[j];
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    jac.col(j) = (fn(xp) - fn(xm)) / (Scalar(2) * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return jac;
}

/// Minimizes 0.5 |fn(x)|^2. `scale` holds a typical magnitude of each
/// parameter; damping and convergence are measured in x / scale.
template <typename Scalar, typename Fn>
Result<Scalar> minimize(Fn&& fn, VectorX<Scalar> x, const VectorX<Scalar>& scale,
                        const Options<Scalar>& opt = {}) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = x.size();
  if (scale.size() != n) throw ParameterError("lm: scale has wrong size");
  for (Eigen::Index j = 0; j < n; ++j)
    if (!(scale[j] > Scalar(0))) throw ParameterError("lm: scales must be positive");

  Result<Scalar> res;
  VectorX<Scalar> r = fn(x);
  if (!r.allFinite()) throw FitError("lm: residual is not finite at the initial point");
  const Eigen::Index m = r.size();
  if (m < n) throw FitError("lm: fewer residuals than parameters");

  Scalar cost = Scalar(0.5) * r.squaredNorm();
  Mat jac = numeric_jacobian<Scalar>(fn, x, scale, m, opt.diff_step);
  Mat js = jac * scale.asDiagonal();
  Scalar lambda = -1;
  Scalar nu = 2;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const VectorX<Scalar> g = js.transpose() * r;
    if (g.template lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance * std::max(cost, Scalar(1e-300))) {
      res.converged = true;
      break;
    }
    VectorX<Scalar> d = js.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < n; ++j) d[j] = std::max(d[j], Scalar(1e-12));
    if (lambda < 0) lambda = Scalar(1e-3);

    // Solve the damped problem [J; sqrt(lambda) D] du = [-r; 0] by QR.
    Mat aug(m + n, n);
    aug.topRows(m) = js;
    aug.bottomRows(n) = (std::sqrt(lambda) * d).asDiagonal();
    VectorX<Scalar> rhs = VectorX<Scalar>::Zero(m + n);
    rhs.head(m) = -r;
    const VectorX<Scalar> du = aug.colPivHouseholderQr().solve(rhs);

    const VectorX<Scalar> xu = x.cwiseQuotient(scale);
    const VectorX<Scalar> x_new = x + du.cwiseProduct(scale);
    VectorX<Scalar> r_new = fn(x_new);
    const Scalar cost_new = r_new.allFinite() ? Scalar(0.5) * r_new.squaredNorm()
                                              : std::numeric_limits<Scalar>::infinity();
    const Scalar predicted = -(g.dot(du)) - Scalar(0.5) * (js * du).squaredNorm();
    const Scalar rho = predicted > Scalar(0) ? (cost - cost_new) / predicted : Scalar(-1);

    const bool small_step =
        (du.cwiseAbs().array() / (xu.cwiseAbs().array() + Scalar(1))).maxCoeff() <= opt.step_tolerance;
    if (cost_new < cost) {
      x = x_new;
      r = std::move(r_new);
      cost = cost_new;
      jac = numeric_jacobian<Scalar>(fn, x, scale, m, opt.diff_step);
      js = jac * scale.asDiagonal();
      lambda *= rho > Scalar(0) ? std::max(Scalar(1) / Scalar(3), Scalar(1) - std::pow(Scalar(2) * rho - Scalar(1), 3))
                                : Scalar(2);
      nu = 2;
      if (small_step || cost == Scalar(0)) {
        res.converged = true;
        ++it;
        break;
      }
    } else {
      if (small_step) {
        res.converged = true;
        break;
      }
      lambda *= nu;
      nu *= 2;
      if (lambda > Scalar(1e30)) break;
    }
  }

  res.x = std::move(x);
  res.residual = std::move(r);
  res.jacobian = std::move(jac);
  res.scale = scale;
  res.cost = cost;
  res.iterations = it;
  return res;
}

}  // namespace resocal::lm

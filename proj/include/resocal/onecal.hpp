// One-port error adapter: short-open-load solve, de-embedding and reporting.
//
// Measured and actual reflections are related by
//   m = e00 + e01e10 * a / (1 - e11 * a)
// Each known standard gives one equation linear in (e00, e11, delta) with
// delta = e00*e11 - e01e10:
//   m = e00 + a*m*e11 - a*delta
#pragma once

#include "resocal/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <vector>

namespace resocal::onecal {

enum class StandardKind { Open, Short, Load, Data };

inline const char* to_string(StandardKind k) {
  switch (k) {
    case StandardKind::Open: return "open";
    case StandardKind::Short: return "short";
    case StandardKind::Load: return "load";
    case StandardKind::Data: return "data";
  }
  return "?";
}

template <typename Scalar>
struct OnePortErrorTermsT {
  FrequencyGridT<Scalar> grid;
  VectorXc<Scalar> e00;     // directivity
  VectorXc<Scalar> e11;     // source match
  VectorXc<Scalar> e01e10;  // reflection tracking

  /// Validates alignment and a non-degenerate tracking term.
  void validate() const {
    const auto n = grid.size();
    if (e00.size() != n || e11.size() != n || e01e10.size() != n)
      throw ParameterError("error terms are not aligned with their grid");
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(e01e10[i]) == Scalar(0))
        throw NumericError("reflection tracking term is zero", static_cast<long>(i));
  }

  static OnePortErrorTermsT identity(const FrequencyGridT<Scalar>& g) {
    const auto n = g.size();
    return {g, VectorXc<Scalar>::Zero(n), VectorXc<Scalar>::Zero(n), VectorXc<Scalar>::Ones(n)};
  }

  static OnePortErrorTermsT constant(const FrequencyGridT<Scalar>& g, std::complex<Scalar> e00,
                                     std::complex<Scalar> e11, std::complex<Scalar> e01e10) {
    const auto n = g.size();
    return {g, VectorXc<Scalar>::Constant(n, e00), VectorXc<Scalar>::Constant(n, e11),
            VectorXc<Scalar>::Constant(n, e01e10)};
  }
};

template <typename Scalar>
struct CalStandardT {
  StandardKind kind = StandardKind::Data;
  ComplexTraceT<Scalar> known_gamma;

  CalStandardT() = default;
  CalStandardT(StandardKind k, ComplexTraceT<Scalar> gamma) : kind(k), known_gamma(std::move(gamma)) {
    for (Eigen::Index i = 0; i < known_gamma.size(); ++i)
      if (std::abs(known_gamma[i]) > Scalar(1) + Scalar(1e-6))
        throw ParameterError(std::string(to_string(kind)) + " standard is active (|gamma| > 1) at index " +
                             std::to_string(i));
  }

  /// Frequency-flat definition, convenient for ideal standards.
  static CalStandardT flat(StandardKind k, const FrequencyGridT<Scalar>& g, std::complex<Scalar> gamma) {
    return CalStandardT(k, ComplexTraceT<Scalar>(g, VectorXc<Scalar>::Constant(g.size(), gamma)));
  }
};

struct CalKitMetadata {
  std::string name;
  std::string temperature;
  std::string date;
};

inline constexpr double kDefaultConditioningFloor = 0.1;

/// Minimum pairwise |gamma_i - gamma_j| of three standard definitions, per point.
template <typename Scalar>
VectorX<Scalar> pairwise_separation(const std::array<CalStandardT<Scalar>, 3>& stds) {
  const auto n = stds[0].known_gamma.size();
  VectorX<Scalar> sep(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = stds[0].known_gamma[i], b = stds[1].known_gamma[i], c = stds[2].known_gamma[i];
    sep[i] = std::min({std::abs(a - b), std::abs(a - c), std::abs(b - c)});
  }
  return sep;
}

template <typename Scalar>
class CalKitT {
 public:
  CalKitT(std::array<CalStandardT<Scalar>, 3> standards, CalKitMetadata meta = {},
          Scalar conditioning_floor = Scalar(kDefaultConditioningFloor))
      : standards_(std::move(standards)), meta_(std::move(meta)) {
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        if (standards_[i].kind == standards_[j].kind)
          throw ParameterError(std::string("calibration kit has two ") + to_string(standards_[i].kind) +
                               " standards");
    const auto& g = standards_[0].known_gamma.grid();
    for (int i = 1; i < 3; ++i)
      require_aligned(g, standards_[i].known_gamma.grid(), "calibration kit standards");
    const VectorX<Scalar> sep = pairwise_separation(standards_);
    for (Eigen::Index i = 0; i < sep.size(); ++i)
      if (sep[i] < conditioning_floor)
        throw ConditioningError("calibration standards are too close (separation " +
                                    std::to_string(sep[i]) + " < floor " +
                                    std::to_string(conditioning_floor) + ")",
                                g[i]);
  }

  const std::array<CalStandardT<Scalar>, 3>& standards() const noexcept { return standards_; }
  const CalStandardT<Scalar>& operator[](std::size_t i) const { return standards_[i]; }
  const CalKitMetadata& metadata() const noexcept { return meta_; }
  const FrequencyGridT<Scalar>& grid() const { return standards_[0].known_gamma.grid(); }

  /// The standard of the given kind; throws if absent.
  const CalStandardT<Scalar>& find(StandardKind kind) const {
    for (const auto& s : standards_)
      if (s.kind == kind) return s;
    throw ParameterError(std::string(to_string(kind)) + " standard absent");
  }

 private:
  std::array<CalStandardT<Scalar>, 3> standards_;
  CalKitMetadata meta_;
};

using OnePortErrorTerms = OnePortErrorTermsT<double>;
using CalStandard = CalStandardT<double>;
using CalKit = CalKitT<double>;

// ---------------------------------------------------------------------------

/// Linear interpolation of Re and Im parts onto `grid`; no extrapolation.
template <typename Scalar>
ComplexTraceT<Scalar> resample(const ComplexTraceT<Scalar>& trace, const FrequencyGridT<Scalar>& grid) {
  const auto& src = trace.grid();
  if (src.aligned_with(grid)) return ComplexTraceT<Scalar>(grid, trace.values());
  const Scalar lo = src.front(), hi = src.back();
  const Scalar slack = Scalar(1e-12) * hi;
  if (grid.front() < lo - slack || grid.back() > hi + slack)
    throw RangeError("requested " + std::to_string(grid.front()) + "-" + std::to_string(grid.back()) +
                     " Hz is outside the calibration bandwidth " + std::to_string(lo) + "-" +
                     std::to_string(hi) + " Hz");
  const auto& xs = src.points();
  VectorXc<Scalar> out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Scalar f = std::clamp(grid[i], lo, hi);
    const auto it = std::upper_bound(xs.data(), xs.data() + xs.size(), f);
    Eigen::Index hi_idx = std::min<Eigen::Index>(it - xs.data(), xs.size() - 1);
    Eigen::Index lo_idx = std::max<Eigen::Index>(hi_idx - 1, 0);
    if (hi_idx == lo_idx) {
      out[i] = trace[lo_idx];
      continue;
    }
    const Scalar t = (f - xs[lo_idx]) / (xs[hi_idx] - xs[lo_idx]);
    out[i] = trace[lo_idx] + t * (trace[hi_idx] - trace[lo_idx]);
  }
  return ComplexTraceT<Scalar>(grid, std::move(out));
}

template <typename Scalar>
CalStandardT<Scalar> resample_standard(const CalStandardT<Scalar>& std_, const FrequencyGridT<Scalar>& grid) {
  return CalStandardT<Scalar>(std_.kind, resample(std_.known_gamma, grid));
}

template <typename Scalar>
CalKitT<Scalar> resample_kit(const CalKitT<Scalar>& kit, const FrequencyGridT<Scalar>& grid,
                             Scalar floor = Scalar(kDefaultConditioningFloor)) {
  return CalKitT<Scalar>({resample_standard(kit[0], grid), resample_standard(kit[1], grid),
                          resample_standard(kit[2], grid)},
                         kit.metadata(), floor);
}

template <typename Scalar>
OnePortErrorTermsT<Scalar> resample_terms(const OnePortErrorTermsT<Scalar>& terms,
                                          const FrequencyGridT<Scalar>& grid) {
  auto pick = [&](const VectorXc<Scalar>& v) {
    return resample(ComplexTraceT<Scalar>(terms.grid, v), grid).values();
  };
  return {grid, pick(terms.e00), pick(terms.e11), pick(terms.e01e10)};
}

// ---------------------------------------------------------------------------

template <typename Scalar>
struct SolveResultT {
  OnePortErrorTermsT<Scalar> terms;
  VectorX<Scalar> residual;  // |A x - b| per frequency
  VectorX<Scalar> rcond;     // reciprocal condition number per frequency
};
using SolveResult = SolveResultT<double>;

/// Minimum reciprocal condition number accepted by solve_sol.
inline constexpr double kMinRcond = 1e-10;

/// Solves the error adapter from measurements of the three kit standards.
/// measured[i] corresponds to kit[i].
template <typename Scalar>
SolveResultT<Scalar> solve_sol_detailed(const std::array<ComplexTraceT<Scalar>, 3>& measured,
                                        const CalKitT<Scalar>& kit) {
  using C = std::complex<Scalar>;
  using Mat3 = Eigen::Matrix<C, 3, 3>;
  using Vec3 = Eigen::Matrix<C, 3, 1>;
  const auto& grid = kit.grid();
  for (int i = 0; i < 3; ++i)
    require_aligned(grid, measured[i].grid(), std::string("measured ") + to_string(kit[i].kind));

  const auto n = grid.size();
  SolveResultT<Scalar> out{{grid, VectorXc<Scalar>(n), VectorXc<Scalar>(n), VectorXc<Scalar>(n)},
                           VectorX<Scalar>(n), VectorX<Scalar>(n)};
  for (Eigen::Index p = 0; p < n; ++p) {
    Mat3 a;
    Vec3 b;
    for (int i = 0; i < 3; ++i) {
      const C m = measured[i][p];
      const C g = kit[i].known_gamma[p];
      a(i, 0) = C(1);
      a(i, 1) = g * m;
      a(i, 2) = -g;
      b(i) = m;
    }
    Eigen::JacobiSVD<Mat3> svd(a);
    const auto& sv = svd.singularValues();
    const Scalar rc = sv(0) > Scalar(0) ? sv(2) / sv(0) : Scalar(0);
    if (!(rc > Scalar(kMinRcond)))
      throw ConditioningError("singular SOL system (rcond " + std::to_string(rc) + ")", grid[p]);
    const Vec3 x = a.fullPivLu().solve(b);
    out.terms.e00[p] = x(0);
    out.terms.e11[p] = x(1);
    out.terms.e01e10[p] = x(0) * x(1) - x(2);
    out.residual[p] = (a * x - b).norm();
    out.rcond[p] = rc;
  }
  out.terms.validate();
  return out;
}

template <typename Scalar>
OnePortErrorTermsT<Scalar> solve_sol(const std::array<ComplexTraceT<Scalar>, 3>& measured,
                                     const CalKitT<Scalar>& kit) {
  return solve_sol_detailed(measured, kit).terms;
}

/// Forward model: actual -> measured.
template <typename Scalar>
ComplexTraceT<Scalar> embed_error(const OnePortErrorTermsT<Scalar>& terms, const ComplexTraceT<Scalar>& actual) {
  using C = std::complex<Scalar>;
  require_aligned(terms.grid, actual.grid(), "embed_error");
  VectorXc<Scalar> out(actual.size());
  for (Eigen::Index i = 0; i < actual.size(); ++i) {
    const C a = actual[i];
    const C den = C(1) - terms.e11[i] * a;
    if (std::abs(den) == Scalar(0)) throw NumericError("1 - e11 * S11a = 0", static_cast<long>(i));
    out[i] = terms.e00[i] + terms.e01e10[i] * a / den;
  }
  return ComplexTraceT<Scalar>(actual.grid(), std::move(out));
}

/// Inverse model: measured -> actual.
template <typename Scalar>
ComplexTraceT<Scalar> apply_cal(const OnePortErrorTermsT<Scalar>& terms, const ComplexTraceT<Scalar>& measured) {
  using C = std::complex<Scalar>;
  require_aligned(terms.grid, measured.grid(), "apply_cal");
  VectorXc<Scalar> out(measured.size());
  for (Eigen::Index i = 0; i < measured.size(); ++i) {
    const C d = measured[i] - terms.e00[i];
    const C den = terms.e01e10[i] + terms.e11[i] * d;
    if (std::abs(den) == Scalar(0)) throw NumericError("zero denominator in calibration", static_cast<long>(i));
    out[i] = d / den;
  }
  return ComplexTraceT<Scalar>(measured.grid(), std::move(out));
}

struct ErrorTermRow {
  double frequency;
  double e00_db;
  double e11_db;
  double e01e10_db;
};

inline constexpr double kDbFloor = -200.0;

inline double magnitude_db(std::complex<double> v, double floor_db = kDbFloor) {
  const double m = std::abs(v);
  if (m == 0.0) return floor_db;
  return std::max(20.0 * std::log10(m), floor_db);
}

template <typename Scalar>
std::vector<ErrorTermRow> error_term_report(const OnePortErrorTermsT<Scalar>& terms,
                                            double floor_db = kDbFloor) {
  std::vector<ErrorTermRow> rows;
  rows.reserve(static_cast<std::size_t>(terms.grid.size()));
  for (Eigen::Index i = 0; i < terms.grid.size(); ++i)
    rows.push_back({static_cast<double>(terms.grid[i]), magnitude_db(terms.e00[i], floor_db),
                    magnitude_db(terms.e11[i], floor_db), magnitude_db(terms.e01e10[i], floor_db)});
  return rows;
}

}  // namespace resocal::onecal

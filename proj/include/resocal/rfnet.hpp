// Frequency-domain network algebra: ABCD matrices, S-parameters with real
// reference impedances, cascading, renormalization and 3-port termination.
#pragma once

#include "resocal/core.hpp"

#include <Eigen/Dense>

#include <initializer_list>
#include <span>
#include <string>
#include <variant>

namespace resocal::rfnet {

template <typename Scalar>
using AbcdMatrix = Eigen::Matrix<std::complex<Scalar>, 2, 2>;

template <typename Scalar, int N>
struct SMatrix {
  Eigen::Matrix<std::complex<Scalar>, N, N> s;
  Eigen::Matrix<Scalar, N, 1> zref;  // Ohms, real and positive
};

template <typename Scalar>
using SMatrix2 = SMatrix<Scalar, 2>;
template <typename Scalar>
using SMatrix3 = SMatrix<Scalar, 3>;

namespace detail {

template <typename Scalar>
void require_finite(const std::complex<Scalar>& v, const char* what) {
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
    throw ParameterError(std::string(what) + " is not finite");
}

template <typename Scalar>
void require_positive_ref(Scalar z, const char* what) {
  if (!std::isfinite(z) || !(z > Scalar(0)))
    throw ParameterError(std::string(what) + " must be a positive real impedance");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elements

/// Lossless TEM line. Electrical length is given in degrees at `f_ref` and
/// scales linearly with frequency.
template <typename Scalar>
AbcdMatrix<Scalar> line(Scalar z0, Scalar length_deg, Scalar f_ref, Scalar f) {
  detail::require_positive_ref(z0, "line characteristic impedance");
  if (!std::isfinite(length_deg) || !std::isfinite(f_ref) || !(f_ref > 0) || !std::isfinite(f))
    throw ParameterError("line length and frequencies must be finite, f_ref > 0");
  using C = std::complex<Scalar>;
  const Scalar phi = length_deg * Scalar(kPi) / Scalar(180) * (f / f_ref);
  const Scalar c = std::cos(phi), s = std::sin(phi);
  AbcdMatrix<Scalar> m;
  m << C(c, 0), C(0, z0 * s), C(0, s / z0), C(c, 0);
  return m;
}

template <typename Scalar>
AbcdMatrix<Scalar> series(std::complex<Scalar> z) {
  detail::require_finite(z, "series impedance");
  AbcdMatrix<Scalar> m;
  m << Scalar(1), z, Scalar(0), Scalar(1);
  return m;
}

template <typename Scalar>
AbcdMatrix<Scalar> shunt(std::complex<Scalar> y) {
  detail::require_finite(y, "shunt admittance");
  AbcdMatrix<Scalar> m;
  m << Scalar(1), Scalar(0), y, Scalar(1);
  return m;
}

template <typename Scalar>
struct LineElement {
  Scalar z0;
  Scalar length_deg;
  Scalar f_ref;
};
template <typename Scalar>
struct SeriesElement {
  std::complex<Scalar> impedance;
};
template <typename Scalar>
struct ShuntElement {
  std::complex<Scalar> admittance;
};

template <typename Scalar>
using Component = std::variant<LineElement<Scalar>, SeriesElement<Scalar>, ShuntElement<Scalar>>;

template <typename Scalar>
AbcdMatrix<Scalar> component_abcd(const Component<Scalar>& c, Scalar f) {
  struct Visitor {
    Scalar f;
    AbcdMatrix<Scalar> operator()(const LineElement<Scalar>& e) const {
      return line(e.z0, e.length_deg, e.f_ref, f);
    }
    AbcdMatrix<Scalar> operator()(const SeriesElement<Scalar>& e) const {
      return series(e.impedance);
    }
    AbcdMatrix<Scalar> operator()(const ShuntElement<Scalar>& e) const {
      return shunt(e.admittance);
    }
  };
  return std::visit(Visitor{f}, c);
}

/// Left-to-right product of the chain.
template <typename Scalar>
AbcdMatrix<Scalar> cascade(std::span<const AbcdMatrix<Scalar>> chain) {
  if (chain.empty()) throw ParameterError("cascade of an empty chain");
  AbcdMatrix<Scalar> m = chain.front();
  for (std::size_t i = 1; i < chain.size(); ++i) m = m * chain[i];
  return m;
}

template <typename Scalar>
AbcdMatrix<Scalar> cascade(std::initializer_list<AbcdMatrix<Scalar>> chain) {
  return cascade(std::span<const AbcdMatrix<Scalar>>(chain.begin(), chain.size()));
}

// ---------------------------------------------------------------------------
// Conversions

template <typename Scalar>
SMatrix2<Scalar> abcd_to_s(const AbcdMatrix<Scalar>& m, Scalar zref1, Scalar zref2) {
  detail::require_positive_ref(zref1, "reference impedance 1");
  detail::require_positive_ref(zref2, "reference impedance 2");
  using C = std::complex<Scalar>;
  const C a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
  const C den = a * zref2 + b + c * zref1 * zref2 + d * zref1;
  if (std::abs(den) == Scalar(0) || !std::isfinite(std::abs(den)))
    throw NumericError("degenerate network in ABCD to S conversion");
  const Scalar root = std::sqrt(zref1 * zref2);
  SMatrix2<Scalar> out;
  out.s(0, 0) = (a * zref2 + b - c * zref1 * zref2 - d * zref1) / den;
  out.s(0, 1) = Scalar(2) * (a * d - b * c) * root / den;
  out.s(1, 0) = Scalar(2) * root / den;
  out.s(1, 1) = (-a * zref2 + b - c * zref1 * zref2 + d * zref1) / den;
  out.zref << zref1, zref2;
  return out;
}

/// Inverse of abcd_to_s; requires s21 != 0.
template <typename Scalar>
AbcdMatrix<Scalar> s_to_abcd(const SMatrix2<Scalar>& sm) {
  using C = std::complex<Scalar>;
  const C s11 = sm.s(0, 0), s12 = sm.s(0, 1), s21 = sm.s(1, 0), s22 = sm.s(1, 1);
  if (std::abs(s21) == Scalar(0)) throw NumericError("S to ABCD conversion needs s21 != 0");
  const Scalar z1 = sm.zref(0), z2 = sm.zref(1);
  const C two_s21 = Scalar(2) * s21;
  const C p = s12 * s21;
  AbcdMatrix<Scalar> m;
  m(0, 0) = ((C(1) + s11) * (C(1) - s22) + p) / two_s21 * std::sqrt(z1 / z2);
  m(0, 1) = ((C(1) + s11) * (C(1) + s22) - p) / two_s21 * std::sqrt(z1 * z2);
  m(1, 0) = ((C(1) - s11) * (C(1) - s22) - p) / two_s21 / std::sqrt(z1 * z2);
  m(1, 1) = ((C(1) - s11) * (C(1) + s22) + p) / two_s21 * std::sqrt(z2 / z1);
  return m;
}

/// Power-wave renormalization to new real references:
/// S' = K (S - G) (I - G S)^-1 K^-1, G_i = (Z'_i - Z_i)/(Z'_i + Z_i),
/// K_i = (Z_i + Z'_i) / (2 sqrt(Z_i Z'_i)).
template <typename Scalar, int N>
SMatrix<Scalar, N> renormalize_s(const SMatrix<Scalar, N>& sm,
                                 const Eigen::Matrix<Scalar, N, 1>& new_refs) {
  using C = std::complex<Scalar>;
  using Mat = Eigen::Matrix<C, N, N>;
  for (int i = 0; i < N; ++i) detail::require_positive_ref(new_refs(i), "new reference impedance");
  if (new_refs == sm.zref) return sm;

  Eigen::Matrix<C, N, 1> g, k;
  for (int i = 0; i < N; ++i) {
    const Scalar z = sm.zref(i), zn = new_refs(i);
    g(i) = (zn - z) / (zn + z);
    k(i) = (z + zn) / (Scalar(2) * std::sqrt(z * zn));
  }
  const Mat gmat = g.asDiagonal();
  const Mat lhs = Mat::Identity() - gmat * sm.s;
  Eigen::PartialPivLU<Mat> lu(lhs.transpose());
  if (std::abs(lu.determinant()) == Scalar(0)) throw NumericError("singular renormalization");
  // (S - G)(I - G S)^-1 computed as ((I - G S)^-T (S - G)^T)^T
  const Mat inner = lu.solve((sm.s - gmat).transpose()).transpose();
  SMatrix<Scalar, N> out;
  out.s = k.asDiagonal() * inner * k.cwiseInverse().asDiagonal();
  out.zref = new_refs;
  return out;
}

template <typename Scalar>
SMatrix2<Scalar> renormalize_s(const SMatrix2<Scalar>& sm, Scalar zref1, Scalar zref2) {
  return renormalize_s<Scalar, 2>(sm, Eigen::Matrix<Scalar, 2, 1>(zref1, zref2));
}

/// Terminates `port` (0-based) of a 3-port with reflection `gamma` and returns
/// the 2-port formed by the remaining ports in ascending order.
template <typename Scalar>
SMatrix2<Scalar> terminate_3port(const SMatrix3<Scalar>& sm, int port, std::complex<Scalar> gamma) {
  if (port < 0 || port > 2) throw ParameterError("3-port termination index must be 0, 1 or 2");
  detail::require_finite(gamma, "termination reflection");
  using C = std::complex<Scalar>;
  const int k = port;
  const C den = C(1) - sm.s(k, k) * gamma;
  if (std::abs(den) == Scalar(0)) throw NumericError("resonant termination: 1 - s_kk * gamma = 0");

  int keep[2];
  for (int i = 0, n = 0; i < 3; ++i)
    if (i != k) keep[n++] = i;

  SMatrix2<Scalar> out;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const int i = keep[r], j = keep[c];
      out.s(r, c) = sm.s(i, j) + sm.s(i, k) * gamma * sm.s(k, j) / den;
    }
  out.zref << sm.zref(keep[0]), sm.zref(keep[1]);
  return out;
}

// ---------------------------------------------------------------------------
// Terminations

struct Open {};
struct Short {};

/// Impedance-like termination; infinite and zero impedances are tagged.
template <typename Scalar>
using Termination = std::variant<std::complex<Scalar>, Open, Short>;

template <typename Scalar>
std::complex<Scalar> reflection_of_impedance(std::complex<Scalar> z, Scalar zref) {
  detail::require_positive_ref(zref, "reference impedance");
  detail::require_finite(z, "termination impedance");
  const std::complex<Scalar> den = z + zref;
  if (std::abs(den) == Scalar(0)) throw NumericError("termination impedance equals -zref");
  return (z - zref) / den;
}

template <typename Scalar>
std::complex<Scalar> reflection_of_impedance(const Termination<Scalar>& t, Scalar zref) {
  detail::require_positive_ref(zref, "reference impedance");
  if (std::holds_alternative<Open>(t)) return Scalar(1);
  if (std::holds_alternative<Short>(t)) return Scalar(-1);
  return reflection_of_impedance(std::get<std::complex<Scalar>>(t), zref);
}

/// Reflection seen at port 1 of a 2-port whose port 2 is loaded by `gamma_load`.
template <typename Scalar>
std::complex<Scalar> input_reflection(const SMatrix2<Scalar>& sm, std::complex<Scalar> gamma_load) {
  const std::complex<Scalar> den = std::complex<Scalar>(1) - sm.s(1, 1) * gamma_load;
  if (std::abs(den) == Scalar(0)) throw NumericError("resonant load: 1 - s22 * gamma = 0");
  return sm.s(0, 0) + sm.s(0, 1) * sm.s(1, 0) * gamma_load / den;
}

}  // namespace resocal::rfnet

// Circuit synthesis for capacitively coupled parallel-LCR resonators measured
// in hanger mode (through a feedline with optional wirebond inductors) or in
// reflection mode (through a leaky circulator).
#pragma once

#include "resocal/core.hpp"
#include "resocal/onecal.hpp"
#include "resocal/rfnet.hpp"

#include <string>

namespace resocal::circsim {

enum class Mode { Hanger, Reflection };

inline const char* to_string(Mode m) { return m == Mode::Hanger ? "hanger" : "reflection"; }

/// Internal reference impedance used while assembling networks (Ohms).
inline constexpr double kInternalRef = 50.0;

template <typename Scalar>
struct LineSpec {
  Scalar z0 = Scalar(50);
  Scalar length_deg = Scalar(0);
  Scalar f_ref = Scalar(6e9);
};

/// Full parameterization of the simulated circuits.
///
/// Reflection mode: port 1 (z1) - tl1 - circulator 1->2 - tl3 - resonator,
/// return path circulator 2->3 - tl2 - port 2 (z2).
/// Hanger mode: port 1 (z1) - L1 - tl3 - (shunt resonator) - tl4 - L2 - port 2 (z2).
template <typename Scalar>
struct CircuitSpecT {
  Mode mode = Mode::Reflection;
  Scalar z1 = Scalar(50);
  Scalar z2 = Scalar(50);
  LineSpec<Scalar> tl1, tl2, tl3, tl4;
  Scalar l_res = Scalar(1.2e-9);
  Scalar c_res = Scalar(580e-15);
  Scalar r_res = Scalar(1e8);
  Scalar c_couple = Scalar(1e-15);
  Scalar circulator_isolation_db = Scalar(300);
  Scalar wirebond_l1 = Scalar(0);
  Scalar wirebond_l2 = Scalar(0);

  void validate() const {
    auto pos = [](Scalar v, const char* what) {
      if (!std::isfinite(v) || !(v > Scalar(0))) throw ParameterError(std::string(what) + " must be positive");
    };
    auto nonneg = [](Scalar v, const char* what) {
      if (!std::isfinite(v) || v < Scalar(0)) throw ParameterError(std::string(what) + " must be >= 0");
    };
    pos(z1, "z1");
    pos(z2, "z2");
    for (const auto* l : {&tl1, &tl2, &tl3, &tl4}) {
      pos(l->z0, "line impedance");
      pos(l->f_ref, "line reference frequency");
      if (!std::isfinite(l->length_deg)) throw ParameterError("line length must be finite");
    }
    pos(l_res, "resonator inductance");
    pos(c_res, "resonator capacitance");
    pos(r_res, "resonator resistance");
    pos(c_couple, "coupling capacitance");
    nonneg(circulator_isolation_db, "circulator isolation");
    nonneg(wirebond_l1, "wirebond L1");
    nonneg(wirebond_l2, "wirebond L2");
  }
};

using CircuitSpec = CircuitSpecT<double>;

/// Ideal circulator 1->2->3->1 with reverse leakage 10^(-iso/20) and matched ports.
template <typename Scalar>
struct CirculatorModel {
  Scalar isolation_db = Scalar(300);

  Scalar leakage() const { return std::pow(Scalar(10), -isolation_db / Scalar(20)); }

  rfnet::SMatrix3<Scalar> s_matrix(Scalar zref = Scalar(kInternalRef)) const {
    if (!(isolation_db >= Scalar(0))) throw ParameterError("circulator isolation must be >= 0 dB");
    const Scalar iso = leakage();
    rfnet::SMatrix3<Scalar> out;
    // s(i, j): wave out of port i for wave into port j
    out.s << Scalar(0), iso, Scalar(1),
             Scalar(1), Scalar(0), iso,
             iso, Scalar(1), Scalar(0);
    out.zref.setConstant(zref);
    return out;
  }
};

// ---------------------------------------------------------------------------

/// Series Cc followed by the parallel R, L, C to ground.
template <typename Scalar>
std::complex<Scalar> lcr_branch_impedance(const CircuitSpecT<Scalar>& spec, Scalar f) {
  if (!std::isfinite(f) || !(f > Scalar(0))) throw ParameterError("frequency must be positive");
  using C = std::complex<Scalar>;
  const Scalar w = Scalar(2 * kPi) * f;
  const C y_par = C(Scalar(1) / spec.r_res, w * spec.c_res - Scalar(1) / (w * spec.l_res));
  return C(0, Scalar(-1) / (w * spec.c_couple)) + C(1) / y_par;
}

template <typename Scalar>
Scalar designed_qi(Scalar r, Scalar l, Scalar c) {
  if (!(r > 0) || !(l > 0) || !(c > 0)) throw ParameterError("designed_qi needs positive R, L, C");
  return r * std::sqrt(c / l);
}

template <typename Scalar>
Scalar lc_resonance(Scalar l, Scalar c) {
  return Scalar(1) / (Scalar(2 * kPi) * std::sqrt(l * c));
}

/// Reflection of the resonator branch referred to the internal reference.
template <typename Scalar>
std::complex<Scalar> resonator_gamma(const CircuitSpecT<Scalar>& spec, Scalar f) {
  return rfnet::reflection_of_impedance(lcr_branch_impedance(spec, f), Scalar(kInternalRef));
}

template <typename Scalar>
rfnet::AbcdMatrix<Scalar> line_abcd(const LineSpec<Scalar>& l, Scalar f) {
  return rfnet::line(l.z0, l.length_deg, l.f_ref, f);
}

/// Hanger-mode s21 at one frequency.
template <typename Scalar>
std::complex<Scalar> hanger_point(const CircuitSpecT<Scalar>& spec, Scalar f) {
  using C = std::complex<Scalar>;
  const Scalar w = Scalar(2 * kPi) * f;
  const rfnet::AbcdMatrix<Scalar> m = rfnet::cascade<Scalar>({
      rfnet::series(C(0, w * spec.wirebond_l1)),
      line_abcd(spec.tl3, f),
      rfnet::shunt(C(1) / lcr_branch_impedance(spec, f)),
      line_abcd(spec.tl4, f),
      rfnet::series(C(0, w * spec.wirebond_l2)),
  });
  const Scalar ref = Scalar(kInternalRef);
  const auto s = rfnet::renormalize_s(rfnet::abcd_to_s(m, ref, ref), spec.z1, spec.z2);
  return s.s(1, 0);
}

/// Reflection-mode input->output transmission at one frequency for an
/// arbitrary one-port `gamma_dut` placed at the far end of tl3.
template <typename Scalar>
std::complex<Scalar> reflection_point(const CircuitSpecT<Scalar>& spec, Scalar f,
                                      std::complex<Scalar> gamma_dut) {
  const Scalar ref = Scalar(kInternalRef);
  const auto tl3 = rfnet::abcd_to_s(line_abcd(spec.tl3, f), ref, ref);
  const std::complex<Scalar> gamma_port = rfnet::input_reflection(tl3, gamma_dut);

  const CirculatorModel<Scalar> circ{spec.circulator_isolation_db};
  const auto reduced = rfnet::terminate_3port(circ.s_matrix(ref), 1, gamma_port);
  const rfnet::AbcdMatrix<Scalar> m =
      rfnet::cascade<Scalar>({line_abcd(spec.tl1, f), rfnet::s_to_abcd(reduced), line_abcd(spec.tl2, f)});
  const auto s = rfnet::renormalize_s(rfnet::abcd_to_s(m, ref, ref), spec.z1, spec.z2);
  return s.s(1, 0);
}

template <typename Scalar, typename PointFn>
ComplexTraceT<Scalar> sweep(const FrequencyGridT<Scalar>& grid, PointFn&& fn) {
  VectorXc<Scalar> out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    try {
      out[i] = fn(grid[i], i);
    } catch (const NumericError& e) {
      if (e.index() >= 0) throw;
      throw NumericError(e.what(), static_cast<long>(i));
    }
  }
  return ComplexTraceT<Scalar>(grid, std::move(out));
}

template <typename Scalar>
ComplexTraceT<Scalar> simulate_hanger(const CircuitSpecT<Scalar>& spec, const FrequencyGridT<Scalar>& grid) {
  if (spec.mode != Mode::Hanger) throw ParameterError("simulate_hanger needs a hanger-mode circuit");
  spec.validate();
  return sweep(grid, [&](Scalar f, Eigen::Index) { return hanger_point(spec, f); });
}

template <typename Scalar>
ComplexTraceT<Scalar> simulate_reflection(const CircuitSpecT<Scalar>& spec, const FrequencyGridT<Scalar>& grid) {
  if (spec.mode != Mode::Reflection) throw ParameterError("simulate_reflection needs a reflection-mode circuit");
  spec.validate();
  return sweep(grid, [&](Scalar f, Eigen::Index) { return reflection_point(spec, f, resonator_gamma(spec, f)); });
}

/// Reflection-mode response with the resonator replaced by the one-port
/// `dut` (reflection at the far end of tl3).
template <typename Scalar>
ComplexTraceT<Scalar> simulate_reflection_with_load(const CircuitSpecT<Scalar>& spec,
                                                    const ComplexTraceT<Scalar>& dut) {
  if (spec.mode != Mode::Reflection) throw ParameterError("reflection-mode circuit required");
  spec.validate();
  return sweep(dut.grid(), [&](Scalar f, Eigen::Index i) { return reflection_point(spec, f, dut[i]); });
}

/// Actual reflection of the resonator alone, sampled on `grid`.
template <typename Scalar>
ComplexTraceT<Scalar> resonator_reflection(const CircuitSpecT<Scalar>& spec, const FrequencyGridT<Scalar>& grid) {
  spec.validate();
  return sweep(grid, [&](Scalar f, Eigen::Index) { return resonator_gamma(spec, f); });
}

template <typename Scalar>
ComplexTraceT<Scalar> simulate(const CircuitSpecT<Scalar>& spec, const FrequencyGridT<Scalar>& grid) {
  return spec.mode == Mode::Hanger ? simulate_hanger(spec, grid) : simulate_reflection(spec, grid);
}

using onecal::embed_error;

// ---------------------------------------------------------------------------
// Analytic estimates used to place simulation grids.

/// Loaded resonance frequency (Cc in parallel with C).
template <typename Scalar>
Scalar estimated_f0(const CircuitSpecT<Scalar>& spec) {
  return lc_resonance(spec.l_res, spec.c_res + spec.c_couple);
}

/// Weak-coupling Qc: C / (w Cc^2 Z_env), Z_env = 50 for reflection, 25 for hanger.
template <typename Scalar>
Scalar estimated_qc(const CircuitSpecT<Scalar>& spec) {
  const Scalar w = Scalar(2 * kPi) * estimated_f0(spec);
  const Scalar z_env = spec.mode == Mode::Hanger ? Scalar(kInternalRef / 2) : Scalar(kInternalRef);
  return (spec.c_res + spec.c_couple) / (w * spec.c_couple * spec.c_couple * z_env);
}

template <typename Scalar>
Scalar estimated_q(const CircuitSpecT<Scalar>& spec) {
  const Scalar qi = designed_qi(spec.r_res, spec.l_res, spec.c_res + spec.c_couple);
  return Scalar(1) / (Scalar(1) / qi + Scalar(1) / estimated_qc(spec));
}

/// `points` samples over +/- `linewidths` estimated linewidths around f0.
template <typename Scalar>
FrequencyGridT<Scalar> resonance_grid(const CircuitSpecT<Scalar>& spec, Eigen::Index points = 2001,
                                      Scalar linewidths = Scalar(20)) {
  const Scalar f0 = estimated_f0(spec);
  const Scalar half = linewidths * f0 / estimated_q(spec);
  return FrequencyGridT<Scalar>::linspace(f0 - half, f0 + half, points);
}

// ---------------------------------------------------------------------------
// Presets reproducing published circuit parameters.

/// Reflection mode, all ports/lines 50 Ohm, l1 = l2 = 90 deg, l3 = 0.
inline CircuitSpec table1_preset(double isolation_db, double r_res = 1e8) {
  CircuitSpec s;
  s.mode = Mode::Reflection;
  s.tl1 = {50, 90, 6e9};
  s.tl2 = {50, 90, 6e9};
  s.tl3 = {50, 0, 6e9};
  s.r_res = r_res;
  s.circulator_isolation_db = isolation_db;
  return s;
}

/// Reflection mode with mismatched ports z1 = 20, z2 = 120 Ohm.
inline CircuitSpec fig2_preset(double l3_deg, double r_res = 1e8) {
  CircuitSpec s = table1_preset(300, r_res);
  s.z1 = 20;
  s.z2 = 120;
  s.tl3.length_deg = l3_deg;
  return s;
}

/// Hanger mode with wirebond inductors L1 = 0.5 nH, L2 = 1.5 nH.
inline CircuitSpec fig8_preset(double l3_deg, double l4_deg, double r_res = 1e12) {
  CircuitSpec s;
  s.mode = Mode::Hanger;
  s.tl3 = {50, l3_deg, 6e9};
  s.tl4 = {50, l4_deg, 6e9};
  s.wirebond_l1 = 0.5e-9;
  s.wirebond_l2 = 1.5e-9;
  s.r_res = r_res;
  return s;
}

}  // namespace resocal::circsim

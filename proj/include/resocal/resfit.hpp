// Resonance extraction from complex transmission/reflection traces.
//
// Both measurement geometries share the normalized lineshape
//   s(f) = 1 - k (Q/Qc) e^{i theta} / (1 + 2 i Q (f - f0)/f0)
// with k = 1 for hanger mode and k = 2 for reflection mode. Raw traces carry
// an additional complex baseline and cable delay, a e^{-2 pi i f tau}.
#pragma once

#include "resocal/core.hpp"

#include <complex>
#include <optional>
#include <span>
#include <string>

namespace resocal::resfit {

enum class FitMode { HangerDcm, HangerNaive, Reflection, ReflectionDcm };

const char* to_string(FitMode m);

enum class HangerCorrection { Dcm, Naive };
enum class ReflectionCorrection { None, Dcm };

struct ParameterErrors {
  double f0 = 0;
  double q_total = 0;
  double q_coupling = 0;
  double q_internal = 0;
  double theta = 0;
  double baseline_a = 0;
};

struct ResonatorFitResult {
  double f0 = 0;           // Hz
  double q_total = 0;      // Q
  double q_coupling = 0;   // Qc (DCM-corrected Qc / cos(theta) when a DCM mode is used)
  double q_internal = 0;   // Qi; negative values are kept and flagged
  double theta = 0;        // rad, in (-pi, pi]
  double baseline_a = 0;   // off-resonance magnitude of the raw trace
  double diameter = 0;     // normalized circle diameter k Q / Qc_fit
  double delay = 0;        // s
  std::complex<double> off_resonance{1.0, 0.0};  // raw-trace off-resonance point at f0
  FitMode mode = FitMode::HangerDcm;
  ParameterErrors errors;
  bool pathology = false;  // Qi < 0: apparent gain
  double rms_residual = 0;
  int iterations = 0;
};

struct PreprocessOptions {
  double edge_fraction = 0.2;
  bool refine_delay = true;
  double min_linewidths = 6.0;
};

struct PreprocessResult {
  ComplexTrace trace;  // delay removed and divided by the off-resonance point
  double delay = 0;    // s
  double baseline_a = 0;
  std::complex<double> off_resonance_point;  // after delay removal
  double f0_estimate = 0;
  double linewidth_estimate = 0;  // FWHM, Hz
};

/// Removes cable delay and normalizes the off-resonance point to 1 + 0i.
PreprocessResult preprocess(const ComplexTrace& trace, std::optional<double> f0_guess = std::nullopt,
                            const PreprocessOptions& opt = {});

struct CircleFit {
  std::complex<double> center;
  double radius = 0;
  double rms_residual = 0;
};

/// Algebraic (Taubin) least-squares circle; exact for noise-free points.
CircleFit circle_fit(std::span<const std::complex<double>> points);
CircleFit circle_fit(const VectorXc<double>& points);

struct PhaseFit {
  double f0 = 0;
  double q_total = 0;
  double theta0 = 0;  // angle at f0 is theta0; far off resonance it is theta0 +/- pi
  double rms_residual = 0;
  int iterations = 0;
};

/// Fits arg(s - center) = theta0 + 2 atan(2 Q (1 - f/f0)).
PhaseFit phase_fit(const ComplexTrace& trace, std::complex<double> center);

struct FitOptions {
  PreprocessOptions preprocess;
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double max_phase_rms = 0.6;  // rad; phase fits worse than this are rejected
};

ResonatorFitResult fit_hanger(const ComplexTrace& trace, HangerCorrection correction = HangerCorrection::Dcm,
                              const FitOptions& opt = {});

ResonatorFitResult fit_reflection(const ComplexTrace& trace,
                                  ReflectionCorrection correction = ReflectionCorrection::None,
                                  const FitOptions& opt = {});

/// Dispatches on mode.
ResonatorFitResult fit(const ComplexTrace& trace, FitMode mode, const FitOptions& opt = {});

/// Largest rotation compatible with a passive circle of off-resonance level a.
double theta_max(double a);

inline constexpr double kHbar = 1.054571817e-34;  // J s

struct PhotonNumberParams {
  double z0 = 50;      // Ohm, environment
  double zr = 50;      // Ohm, resonator
  double q_total = 0;
  double q_coupling = 0;
  double f0 = 0;       // Hz
  double p_app = 0;    // W
};

double photon_number(const PhotonNumberParams& p);

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

/// Lineshape with unit baseline and zero delay; `k` is 1 (hanger) or 2 (reflection).
std::complex<double> lineshape(double f, double f0, double q, double qc, double theta, double k);

}  // namespace resocal::resfit

// Power-dependent two-level-system loss:
//   1/Qi = F/Qi0 * tanh(h f0 / (2 kB T)) / sqrt(1 + (n/nc)^beta) + 1/Qother
#pragma once

#include "resocal/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace resocal::tls {

inline constexpr double kPlanck = 6.62607015e-34;   // J s
inline constexpr double kBoltzmann = 1.380649e-23;  // J / K
inline constexpr double kDefaultTemperature = 0.015;  // K
inline constexpr double kDefaultBeta = 1.0;

struct TlsParams {
  double f_q0 = 0;     // F / Qi0 (F tan delta0)
  double n_c = 1;      // critical photon number
  double beta = kDefaultBeta;
  double q_other = 1;  // power-independent Q
  double f0 = 5e9;     // Hz
  double temperature = kDefaultTemperature;  // K

  void validate() const;
};

/// tanh(h f0 / (2 kB T)), in (0, 1].
double thermal_factor(double f0, double temperature);

/// 1/Qi at photon number n.
double tls_loss(const TlsParams& p, double n);

struct LossPoint {
  double n = 0;       // photon number
  double inv_qi = 0;  // 1/Qi
  double weight = 1;
};

using LossSweep = std::vector<LossPoint>;

struct TlsErrors {
  double f_q0 = 0;
  double n_c = 0;
  double beta = 0;  // 0 when beta is held fixed
  double q_other = 0;
};

struct TlsFitResult {
  TlsParams params;
  TlsErrors errors;
  double rms_relative_residual = 0;
  int iterations = 0;
  bool beta_fixed = true;
};

struct TlsFitOptions {
  /// Hold beta at this value; nullopt fits it.
  std::optional<double> fix_beta = kDefaultBeta;
  int max_iterations = 200;
  double step_tolerance = 1e-12;
};

/// Weighted least squares on relative residuals of 1/Qi.
TlsFitResult fit_tls(const LossSweep& sweep, double f0, double temperature = kDefaultTemperature,
                     const TlsFitOptions& opt = {});

/// Table-shaped text report: f0 [GHz], F/Qi0 x1e5, n_c, Qother x1e-5 with errors.
std::string format_report(const std::vector<TlsFitResult>& fits);

}  // namespace resocal::tls

// Shared value types and error classes for the resocal toolkit.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace resocal {

template <typename Scalar>
using Complex = std::complex<Scalar>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using VectorXc = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Errors. Every failure mode surfaced by the library derives from Error so the
// CLI can map families of failures onto exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Division by zero or another singular numeric step.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, long index = -1)
      : Error(index >= 0 ? what + " (frequency index " + std::to_string(index) + ")" : what),
        index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// Requested point lies outside the available data range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Optimizer failed or a fitted quantity is unusable.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Parameters that the data cannot constrain.
class IdentifiabilityError : public FitError {
 public:
  using FitError::FitError;
};

/// Ill-conditioned calibration system.
class ConditioningError : public Error {
 public:
  explicit ConditioningError(const std::string& what, double frequency = -1.0)
      : Error(frequency > 0 ? what + " at " + std::to_string(frequency) + " Hz" : what),
        frequency_(frequency) {}
  double frequency() const noexcept { return frequency_; }

 private:
  double frequency_;
};

/// Malformed input text; line is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------

/// Strictly increasing, positive, non-empty list of frequencies in Hz.
template <typename Scalar>
class FrequencyGridT {
 public:
  FrequencyGridT() = default;

  explicit FrequencyGridT(VectorX<Scalar> points) : points_(std::move(points)) {
    if (points_.size() == 0) throw ParameterError("frequency grid is empty");
    for (Eigen::Index i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i]) || points_[i] <= Scalar(0))
        throw ParameterError("frequency grid point " + std::to_string(i) + " is not positive");
      if (i > 0 && !(points_[i] > points_[i - 1]))
        throw ParameterError("frequency grid is not strictly increasing at index " +
                             std::to_string(i));
    }
  }

  /// `count` evenly spaced points from `start` to `stop` inclusive.
  static FrequencyGridT linspace(Scalar start, Scalar stop, Eigen::Index count) {
    if (count < 1) throw ParameterError("linspace needs at least one point");
    if (count == 1) return FrequencyGridT(VectorX<Scalar>::Constant(1, start));
    return FrequencyGridT(VectorX<Scalar>::LinSpaced(count, start, stop));
  }

  Eigen::Index size() const noexcept { return points_.size(); }
  Scalar operator[](Eigen::Index i) const { return points_[i]; }
  Scalar front() const { return points_[0]; }
  Scalar back() const { return points_[points_.size() - 1]; }
  const VectorX<Scalar>& points() const noexcept { return points_; }

  bool operator==(const FrequencyGridT& other) const {
    return points_.size() == other.points_.size() && points_ == other.points_;
  }

  /// Same length and every point equal within `rel_tol`.
  bool aligned_with(const FrequencyGridT& other, Scalar rel_tol = Scalar(1e-12)) const {
    if (size() != other.size()) return false;
    for (Eigen::Index i = 0; i < size(); ++i)
      if (std::abs(points_[i] - other.points_[i]) > rel_tol * std::abs(points_[i])) return false;
    return true;
  }

 private:
  VectorX<Scalar> points_;
};

/// Frequency-indexed complex samples (one per grid point, all finite).
template <typename Scalar>
class ComplexTraceT {
 public:
  ComplexTraceT() = default;

  ComplexTraceT(FrequencyGridT<Scalar> grid, VectorXc<Scalar> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw ParameterError("trace has " + std::to_string(values_.size()) + " values for " +
                           std::to_string(grid_.size()) + " grid points");
    for (Eigen::Index i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i].real()) || !std::isfinite(values_[i].imag()))
        throw ParameterError("trace value at index " + std::to_string(i) + " is not finite");
  }

  Eigen::Index size() const noexcept { return values_.size(); }
  const FrequencyGridT<Scalar>& grid() const noexcept { return grid_; }
  const VectorXc<Scalar>& values() const noexcept { return values_; }
  Scalar frequency(Eigen::Index i) const { return grid_[i]; }
  Complex<Scalar> operator[](Eigen::Index i) const { return values_[i]; }

 private:
  FrequencyGridT<Scalar> grid_;
  VectorXc<Scalar> values_;
};

using FrequencyGrid = FrequencyGridT<double>;
using ComplexTrace = ComplexTraceT<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Throws ParameterError naming `what` unless both grids are aligned.
template <typename Scalar>
void require_aligned(const FrequencyGridT<Scalar>& a, const FrequencyGridT<Scalar>& b,
                     const std::string& what) {
  if (!a.aligned_with(b)) throw ParameterError(what + ": frequency grids do not match");
}

}  // namespace resocal

#pragma once

#include <stdexcept>
#include <string>

namespace bmtk {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Failures of a numerical procedure (non-convergence, non-finite values).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Newton failure after load stepping is exhausted; carries the last residual norm.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Target area outside the reachable pressure sweep.
class CalibrationError : public NumericalError {
 public:
  CalibrationError(const std::string& what, double min_area, double max_area)
      : NumericalError(what), min_area_(min_area), max_area_(max_area) {}
  double min_area() const noexcept { return min_area_; }
  double max_area() const noexcept { return max_area_; }

 private:
  double min_area_;
  double max_area_;
};

/// Malformed container or checkpoint; `field()` names the offending part.
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Checkpoint manifest does not match the data it is applied to.
class ManifestError : public Error {
 public:
  using Error::Error;
};

/// Latent search produced a non-finite objective.
class OptimizationError : public NumericalError {
 public:
  OptimizationError(const std::string& what, int iteration)
      : NumericalError(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace bmtk

#pragma once

#include <stdexcept>
#include <string>

namespace flowi2i {

// Base for every error raised by the library. Subclasses map onto the CLI's
// exit-code families (config errors vs runtime/numerical errors).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

// A variant constraint was violated (e.g. PRIMARY without a control signal).
class ContractError : public Error {
 public:
  using Error::Error;
};

class TrajectoryError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

// Raised when no corruption inside the SSIM gate was found within the retry
// budget; carries the attempt whose SSIM came closest to the gate.
class GateFailure : public Error {
 public:
  GateFailure(const std::string& what, double closest_ssim)
      : Error(what), closest_ssim_(closest_ssim) {}
  double closest_ssim() const noexcept { return closest_ssim_; }

 private:
  double closest_ssim_;
};

}  // namespace flowi2i

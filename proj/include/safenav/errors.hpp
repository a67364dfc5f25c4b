#pragma once

#include <stdexcept>
#include <string>

namespace safenav {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flatness inputs requested at a reference point with zero velocity.
class HeadingUndefined : public Error {
 public:
  HeadingUndefined() : Error("heading undefined: reference velocity is zero") {}
};

// Polar error dynamics evaluated inside the dead zone.
class IllConditioned : public Error {
 public:
  explicit IllConditioned(double rho)
      : Error("polar error dynamics ill-conditioned: rho = " + std::to_string(rho) +
              " is inside the dead zone") {}
};

// Tube radius denominator is nonpositive.
class TubeBlowUp : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  InsufficientData(std::size_t required, std::size_t available)
      : Error("insufficient data: " + std::to_string(required) + " samples required, " +
              std::to_string(available) + " available"),
        required_(required),
        available_(available) {}

  std::size_t required() const { return required_; }
  std::size_t available() const { return available_; }

 private:
  std::size_t required_;
  std::size_t available_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed artifact on disk (dataset, grid, log, bounds document).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace safenav

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sppnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// eps_d + eps_m = 0: the single-interface dispersion relation has a pole.
class ResonanceError : public Error {
public:
  using Error::Error;
};

/// Negative Im[beta]; amplifying media are not modelled.
class GainMediumError : public Error {
public:
  using Error::Error;
};

class SolverError : public Error {
public:
  SolverError(const std::string& what, double last_residual, int iterations)
      : Error(what), last_residual_(last_residual), iterations_(iterations) {}

  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double last_residual_;
  int iterations_;
};

/// Malformed or inconsistent dataset, model or CSV content.
class DataError : public Error {
public:
  using Error::Error;
};

class ParseError : public DataError {
public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Violated call-order contract, e.g. stage-2 forward on an unvalidated sample.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Non-finite weights, gradients or errors during training.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, int epoch, std::size_t sample)
      : Error(what + " (epoch " + std::to_string(epoch) + ", sample " + std::to_string(sample) + ")"),
        epoch_(epoch),
        sample_(sample) {}

  int epoch() const noexcept { return epoch_; }
  std::size_t sample() const noexcept { return sample_; }

private:
  int epoch_;
  std::size_t sample_;
};

/// Pipeline made no progress within the stall timeout, or a worker aborted.
class PipelineError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace sppnet

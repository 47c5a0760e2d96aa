#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ben {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model specification is malformed or references unknown covariates.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Design matrix is rank deficient or has a constant non-intercept column.
class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

/// Binary outcome with a single observed class.
class SingleClassError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Too few observations for an estimator to run.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Iterative estimator failed; carries the last iterate it reached.
class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, std::vector<double> last_iterate = {})
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

/// Input data could not be ingested (ID mismatch, bad cell, zero variance...).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ben

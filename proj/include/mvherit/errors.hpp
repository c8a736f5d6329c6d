#pragma once

#include <stdexcept>
#include <string>

namespace mvherit {

// Base of all library errors. ValidationError maps to CLI exit code 1,
// NumericalError to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// ingest
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& msg, long line)
      : ValidationError(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class EmptyInput : public ValidationError {
 public:
  explicit EmptyInput(const std::string& msg) : ValidationError(msg) {}
};

class DegenerateSnp : public ValidationError {
 public:
  explicit DegenerateSnp(const std::string& msg) : ValidationError(msg) {}
};

class DuplicateSample : public ValidationError {
 public:
  explicit DuplicateSample(const std::string& msg) : ValidationError(msg) {}
};

class MissingData : public ValidationError {
 public:
  explicit MissingData(const std::string& msg) : ValidationError(msg) {}
};

// kinship
class NotStandardized : public ValidationError {
 public:
  explicit NotStandardized(const std::string& msg) : ValidationError(msg) {}
};

class InvalidScale : public ValidationError {
 public:
  explicit InvalidScale(const std::string& msg) : ValidationError(msg) {}
};

// matstats
class DimError : public ValidationError {
 public:
  explicit DimError(const std::string& msg) : ValidationError(msg) {}
};

class NotSpd : public ValidationError {
 public:
  explicit NotSpd(const std::string& msg) : ValidationError(msg) {}
};

class ImproperPrior : public ValidationError {
 public:
  explicit ImproperPrior(const std::string& msg) : ValidationError(msg) {}
};

class SingularBlock : public NumericalError {
 public:
  explicit SingularBlock(const std::string& msg) : NumericalError(msg) {}
};

// gibbs
class InvalidConfig : public ValidationError {
 public:
  explicit InvalidConfig(const std::string& msg) : ValidationError(msg) {}
};

class NumericalBreakdown : public NumericalError {
 public:
  NumericalBreakdown(const std::string& msg, int chain, long iteration)
      : NumericalError(msg + " (chain " + std::to_string(chain) + ", iteration " +
                       std::to_string(iteration) + ")"),
        chain_(chain),
        iteration_(iteration) {}
  explicit NumericalBreakdown(const std::string& msg)
      : NumericalError(msg), chain_(-1), iteration_(-1) {}
  int chain() const { return chain_; }
  long iteration() const { return iteration_; }

 private:
  int chain_;
  long iteration_;
};

// posterior
class InsufficientSamples : public ValidationError {
 public:
  explicit InsufficientSamples(const std::string& msg) : ValidationError(msg) {}
};

class NeedsMultipleChains : public ValidationError {
 public:
  explicit NeedsMultipleChains(const std::string& msg) : ValidationError(msg) {}
};

class IoError : public ValidationError {
 public:
  explicit IoError(const std::string& msg) : ValidationError(msg) {}
};

// predict
class DegenerateFold : public ValidationError {
 public:
  explicit DegenerateFold(const std::string& msg) : ValidationError(msg) {}
};

class InsufficientData : public ValidationError {
 public:
  explicit InsufficientData(const std::string& msg) : ValidationError(msg) {}
};

// simulate
class InvalidMaf : public ValidationError {
 public:
  explicit InvalidMaf(const std::string& msg) : ValidationError(msg) {}
};

class InvalidFraction : public ValidationError {
 public:
  explicit InvalidFraction(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace mvherit

#pragma once

#include <stdexcept>
#include <string>

namespace levolve {

// Root of every error the library raises. Each subclass maps onto one failure
// mode callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Time outside the flow's interval, degenerate metric, or inconsistent input
// sizes.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

// The minimizing curve is numerically non-unique; first variations are not
// defined there.
class NearCutLocus : public Error {
 public:
  using Error::Error;
};

class ConjugatePoint : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

class NonFiniteCost : public Error {
 public:
  using Error::Error;
};

class StabilityError : public Error {
 public:
  using Error::Error;
};

class NegativeDensity : public Error {
 public:
  using Error::Error;
};

class NonPositiveDensity : public Error {
 public:
  using Error::Error;
};

class InvalidFieldEntry : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SemanticError : public Error {
 public:
  using Error::Error;
};

}  // namespace levolve

#pragma once

#include <stdexcept>
#include <string>

namespace sika {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values or inconsistent shapes.
class ParameterError : public Error {
public:
  using Error::Error;
};

// Inputs outside [0, 1] where normalized inputs are required.
class DomainError : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

// An operation was invoked on missing or stale state (e.g. backward without a cached forward).
class StateError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class LoadError : public Error {
public:
  using Error::Error;
};

} // namespace sika

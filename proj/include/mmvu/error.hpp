#pragma once

#include <stdexcept>
#include <string>

namespace mmvu {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a schema, an invariant, or a shape contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The model endpoint or replay log could not deliver a response.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Replay log has no record for the requested key.
class ReplayMiss : public TransportError {
 public:
  using TransportError::TransportError;
};

// The endpoint answered, but the answer is unusable (never retried).
class ContentError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Bad command line or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmvu

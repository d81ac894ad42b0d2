#pragma once

#include <stdexcept>
#include <string>

namespace kc {

// Base for every error raised by the library. Precondition violations on
// pure functions use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A backend was asked for something it declared unsupported. Raised before
// any request leaves the process.
class CapabilityMissing : public Error {
 public:
  using Error::Error;
};

// Network-level or server-side (5xx/429) failure. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The backend answered, but the payload violates the wire contract.
class MalformedResponse : public Error {
 public:
  using Error::Error;
};

// Replay backend has no recording for a request hash.
class ReplayMiss : public Error {
 public:
  using Error::Error;
};

// Unparseable model output. Carries the raw text for debugging.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class GenerationFailed : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

// Elicitation drifted into tokens the visual context finds implausible.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Too many per-item failures for the aggregate to be trusted.
class RunFailed : public Error {
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

}  // namespace kc

#pragma once

#include <stdexcept>
#include <string>

namespace esm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user configuration: unknown keys, out-of-range values, missing inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A document (spec, dataset, model, LUT) violates its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A persisted file declares a format version this build does not support.
class VersionError : public Error {
 public:
  using Error::Error;
};

// A persisted file fails its integrity checksum (truncation, corruption).
class ChecksumError : public Error {
 public:
  using Error::Error;
};

// A measurement backend could not produce results.
class BackendError : public Error {
 public:
  using Error::Error;
};

// The external backend replied but the exchange violated the protocol.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

// The external backend exceeded its time budget.
class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

// The external backend exited with a nonzero status.
class ExitError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Reference-model quality control failed beyond the retry budget.
class QcError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss) or was fed inconsistent shapes.
class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace esm

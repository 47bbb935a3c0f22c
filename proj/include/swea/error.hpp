#pragma once

#include <stdexcept>
#include <string>

namespace swea {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible with the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

/// Malformed or truncated file content (checkpoints, stores, JSONL).
struct FormatError : Error {
  using Error::Error;
};

/// Text that cannot be tokenized, or ids outside the vocabulary.
struct TokenError : Error {
  using Error::Error;
};

/// Invalid configuration values or mismatched artifacts (e.g. vocab hash).
struct ConfigError : Error {
  using Error::Error;
};

/// Failure while computing editing embeddings for a request.
struct FusionError : Error {
  FusionError(std::string request_id, const std::string& what)
      : Error(what), request_id(std::move(request_id)) {}
  std::string request_id;
};

/// Training diverged or was otherwise aborted.
struct TrainError : Error {
  using Error::Error;
};

}  // namespace swea

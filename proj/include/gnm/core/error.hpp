#pragma once

#include <stdexcept>
#include <string>

namespace gnm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch anywhere in the tensor stack.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite distribution parameters coming out of an inference network.
struct NonFiniteLatent : Error {
  using Error::Error;
};

// Non-finite training objective after the skip-and-log policy is exhausted.
struct NonFiniteLoss : Error {
  using Error::Error;
};

// Invalid argument domain (e.g. non-positive sigma fed to a KL).
struct DomainError : Error {
  using Error::Error;
};

// Non-finite importance weight during likelihood estimation.
struct NonFiniteWeight : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// IDX ingestion failures.
struct BadMagic : IoError {
  using IoError::IoError;
};
struct CountMismatch : IoError {
  using IoError::IoError;
};
struct Truncated : IoError {
  using IoError::IoError;
};

// Dataset / checkpoint container version problems.
struct SchemaVersionMismatch : IoError {
  using IoError::IoError;
};

struct UnknownKind : Error {
  using Error::Error;
};

struct InvalidConfig : Error {
  using Error::Error;
};

struct ClassifierMissing : Error {
  using Error::Error;
};

struct NoActiveCells : Error {
  using Error::Error;
};

}  // namespace gnm

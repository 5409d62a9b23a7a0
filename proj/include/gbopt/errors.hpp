#pragma once

#include <stdexcept>
#include <string>

namespace gbopt {

// Base class for all errors thrown by the library. The C API maps each
// subclass to a distinct error code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Shape or structure violations: non-square matrices, asymmetric input,
// mismatched dimensions between caller-declared patterns and data.
class StructuralError : public Error {
public:
  using Error::Error;
};

// NaN or Inf encountered in input data or produced by a user callback.
class NumericError : public Error {
public:
  using Error::Error;
};

// Factorization detected a numerically singular matrix (zero inertia count
// is reported on the factorization; solving through it raises this).
class SingularError : public Error {
public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
  using Error::Error;
};

// File opened fine but its header is not a recognized format.
class FormatError : public IoError {
public:
  using IoError::IoError;
};

// Header parsed but the declared dimensions are inconsistent with each
// other or with the rest of the file.
class DimensionError : public IoError {
public:
  using IoError::IoError;
};

// File ends before the payload promised by its header.
class TruncatedError : public IoError {
public:
  using IoError::IoError;
};

// Input values outside their documented domain (e.g. pixel intensities).
class RangeError : public Error {
public:
  using Error::Error;
};

// An oracle callback broke its declared contract (wrong output size,
// values emitted outside the declared sparsity pattern).
class ContractError : public StructuralError {
public:
  using StructuralError::StructuralError;
};

}  // namespace gbopt

#pragma once

#include <stdexcept>
#include <string>

namespace tforge {

// Base class for all library errors. Subclasses map onto the CLI exit-code
// classes: usage errors are handled by the argument parser, everything below
// is a data/format error except NumericError.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotHangulSyllable : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class MissingGlyph : public Error {
 public:
  using Error::Error;
};

class OverflowsCanvas : public Error {
 public:
  using Error::Error;
};

class CellTooSmall : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class OddSpatialDim : public Error {
 public:
  using Error::Error;
};

class GraphNotRecorded : public Error {
 public:
  using Error::Error;
};

class MissingGradient : public Error {
 public:
  using Error::Error;
};

class DimsNotDivisible : public Error {
 public:
  using Error::Error;
};

class SpecMismatch : public Error {
 public:
  using Error::Error;
};

class CountNotDivisible : public Error {
 public:
  using Error::Error;
};

// Raised when a NaN/Inf shows up in a tensor buffer with finite-checking on.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tforge

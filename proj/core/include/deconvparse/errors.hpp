#pragma once

#include <stdexcept>
#include <string>

namespace deconvparse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or chain inconsistency between tensors / layers.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// SwitchSet inconsistent with the tensor it is applied to.
class SwitchError : public Error {
 public:
  using Error::Error;
};

// Invalid scalar parameter (negative threshold, rate >= 1, even window, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced where the contract requires finiteness.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Linear operator violates a required property (symmetry probe failed).
class OperatorError : public Error {
 public:
  using Error::Error;
};

// Label value out of range for the declared class count.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Dataset-level violation (absent class, empty set, ...).
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; message names the byte offset where known.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace deconvparse

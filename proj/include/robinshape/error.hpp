#pragma once

#include <stdexcept>
#include <string>

namespace robinshape {

/// Raised for arguments outside an operation's domain (bad sizes, indices,
/// non-positive dimensions).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mesh that does not satisfy the slab tagging invariants.
class InvalidMesh : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The boundary height profile is not strictly positive.
class InvalidShape : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization or linear solve failure.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration file problems (unknown keys, bad values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace robinshape

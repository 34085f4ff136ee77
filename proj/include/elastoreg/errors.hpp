#pragma once

#include <stdexcept>
#include <string>

namespace elastoreg {

// Base for everything this library throws on purpose.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values: empty subsets, cardinality mismatches, invalid ranges.
class argument_error : public error {
 public:
  using error::error;
};

// Shape/width mismatches between composed pieces (layers, tensors, tapes).
class structural_error : public error {
 public:
  using error::error;
};

// Malformed or inconsistent configuration / input files.
class config_error : public error {
 public:
  using error::error;
};

// Unsupported file format version.
class version_error : public error {
 public:
  using error::error;
};

// Non-finite values or failed numerical procedures.
class numeric_error : public error {
 public:
  using error::error;
};

// Geometric configurations with no well-defined answer (rank-deficient
// Procrustes, coplanar clouds, ...).
class degenerate_error : public error {
 public:
  using error::error;
};

}  // namespace elastoreg

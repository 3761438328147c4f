#pragma once

#include <stdexcept>
#include <string>

namespace dsg {

// Error taxonomy shared across the library. Every throw site uses one of
// these so the CLI can map failures to exit codes uniformly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// A caller violated a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

// A non-finite value appeared where a finite one is required.
struct NumericsError : Error {
  using Error::Error;
};

// A dataset, dump, or checkpoint file is malformed.
struct ParseError : Error {
  using Error::Error;
};

// A file carries an unsupported format version.
struct VersionError : Error {
  using Error::Error;
};

}  // namespace dsg

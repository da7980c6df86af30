#pragma once

#include <stdexcept>
#include <string>

namespace uniconv {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor extents / element counts do not line up.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Invalid configuration (bad field value, violated invariant, unknown key).
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed tape usage (unknown node id, backward on empty tape, ...).
class TapeError : public Error {
public:
  using Error::Error;
};

// File format / filesystem problems.
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace uniconv

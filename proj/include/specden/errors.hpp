#pragma once

#include <stdexcept>
#include <string>

namespace specden {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
  using Error::Error;
};

/// A file or configuration text does not follow the expected format
/// (bad magic bytes, inconsistent header, unparseable key/value line).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Array shapes or index ranges do not line up.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Input values violate an operation's numeric preconditions
/// (negative counts, all-zero matrix, zero-variance scores, ...).
class ValueError : public Error {
public:
  using Error::Error;
};

} // namespace specden

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace aptdet {

// Root of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file: bad magic, schema violation, unparsable JSON.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File ended before the declared payload.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Well-formed input whose values break a domain invariant
// (non-finite data, boxes outside the image, labels out of range).
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure (missing file, short write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace aptdet

#pragma once

#include <stdexcept>
#include <string>

namespace rangesort {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or stream failure; the message names the file involved.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or argument values, detected before any work starts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A map or reduce transform threw; the message identifies the task.
class JobError : public Error {
 public:
  using Error::Error;
};

// An internal invariant did not hold (corrupted state, misconfiguration
// discovered mid-run).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace rangesort

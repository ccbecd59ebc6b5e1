// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fastgen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class InsufficientContext : public Error {
 public:
  using Error::Error;
};

/// A cache was popped/pushed, or an engine stepped, outside its firing schedule.
/// Always a programming error in the caller or the engine.
class ScheduleViolation : public Error {
 public:
  using Error::Error;
};

class UnsupportedTopology : public Error {
 public:
  using Error::Error;
};

class InvalidRow : public Error {
 public:
  using Error::Error;
};

}  // namespace fastgen

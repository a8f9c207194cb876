// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mrvm {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something malformed (bad shape, bad flag, bad range).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data on disk is missing, corrupt, or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or failed a numerical check.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrvm

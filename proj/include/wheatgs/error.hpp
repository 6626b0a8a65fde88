// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace wheatgs {

/// Base class for every error raised on bad inputs (files, configs, arguments).
/// The CLI maps these to exit code 1.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents: missing PLY property, bad JSON layout, mask size mismatch.
class FormatError : public InputError {
  public:
    using InputError::InputError;
};

class IoError : public InputError {
  public:
    using InputError::InputError;
};

/// Camera pose that cannot be repaired into a rigid transform.
class CalibrationError : public InputError {
  public:
    using InputError::InputError;
};

class AlignmentError : public InputError {
  public:
    using InputError::InputError;
};

class EvaluationError : public InputError {
  public:
    using InputError::InputError;
};

/// An internal invariant did not hold. The CLI maps this to exit code 2.
class InvariantError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace wheatgs

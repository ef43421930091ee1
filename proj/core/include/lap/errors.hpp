// Copyright 2026 The LAP Toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LAP_ERRORS_HPP_
#define LAP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace lap {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyper-parameters, channel mismatches, empty trainable sets.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite activations or values that break a numeric precondition.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Kernel/window geometry that does not fit the input.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A function argument outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; the message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A placement request that targets a missing or non-replaceable layer.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// A layer graph whose shapes do not chain.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// An operation invoked on an object that cannot support it.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated binary container.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Degenerate data for a fitting procedure.
class FittingError : public Error {
 public:
  using Error::Error;
};

}  // namespace lap

#endif  // LAP_ERRORS_HPP_

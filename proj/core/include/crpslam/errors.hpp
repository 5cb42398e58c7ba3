// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace crpslam {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity produced (or consumed) by a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API contract, e.g. backward() on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An estimator evaluated outside its domain of definition, e.g. the fair
/// CRPS with fewer than two members.
class EstimatorError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Invalid configuration values (CFL violation, N < 2 for the fair
/// estimator, unknown keys with bad values, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent files and datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace crpslam

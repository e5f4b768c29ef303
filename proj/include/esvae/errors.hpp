// Copyright 2026 The ESVAE Authors
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

#ifndef ESVAE_ERRORS_HPP_
#define ESVAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace esvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation outside its contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Argument values outside the accepted domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset files missing, malformed or unreadable; output files unwritable.
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint files with bad magic, version, or truncated payload.
class LoadError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace esvae

#endif  // ESVAE_ERRORS_HPP_

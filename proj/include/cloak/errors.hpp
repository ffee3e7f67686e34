// Copyright 2026 The Cloak Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CLOAK_ERRORS_HPP
#define CLOAK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cloak {

/// Process exit codes used by the command-line tool. Each error family maps
/// to exactly one code.
enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
  kCalibration = 5,
  kInput = 6,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kInternal)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid configuration value (inverted range, negative gamma, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

/// Degenerate geometry, e.g. a zero-area box.
class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error(what, ExitCode::kInput) {}
};

/// Input that violates an adapter's convention (resolution too small, ...).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what, ExitCode::kInput) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedBoxError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownClassError : public DataError {
 public:
  using DataError::DataError;
};

/// A detector adapter produced a NaN score.
class AdapterFaultError : public Error {
 public:
  explicit AdapterFaultError(const std::string& what) : Error(what, ExitCode::kInternal) {}
};

/// Training produced a non-finite loss. Carries the last good checkpoint path
/// (empty when none was written yet).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string checkpoint)
      : Error(what, ExitCode::kDivergence), checkpoint_(std::move(checkpoint)) {}
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

/// Detector training ended below its quality floor.
class TrainingFailureError : public Error {
 public:
  explicit TrainingFailureError(const std::string& what) : Error(what, ExitCode::kDivergence) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what) : Error(what, ExitCode::kCalibration) {}
};

/// Metric undefined on the given records (e.g. AP with zero positives).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(what, ExitCode::kData) {}
};

}  // namespace cloak

#endif  // CLOAK_ERRORS_HPP

// Copyright 2026 The Voxid Authors.
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

#ifndef VOXID_ERRORS_HPP_
#define VOXID_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace voxid {

// Error taxonomy. The codes map onto CLI exit codes: config -> 2,
// data/file -> 3, numeric/state and everything else -> 4.
enum class ErrorCode {
  kInvalidArgument,
  kShape,
  kCorruptFile,
  kDimension,
  kConfig,
  kData,
  kNumeric,
  kState,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& msg)
      : Error(ErrorCode::kInvalidArgument, msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg)
      : Error(ErrorCode::kShape, msg) {}
};

struct CorruptFileError : Error {
  explicit CorruptFileError(const std::string& msg)
      : Error(ErrorCode::kCorruptFile, msg) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg)
      : Error(ErrorCode::kDimension, msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg)
      : Error(ErrorCode::kConfig, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg)
      : Error(ErrorCode::kData, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg)
      : Error(ErrorCode::kNumeric, msg) {}
};

struct StateError : Error {
  explicit StateError(const std::string& msg)
      : Error(ErrorCode::kState, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCode::kIo, msg) {}
};

}  // namespace voxid

#endif  // VOXID_ERRORS_HPP_

// Copyright 2026 The bnleak Authors
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

#ifndef BNLEAK_ERROR_H_
#define BNLEAK_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace bnleak {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidDataset,
  kTrainingDiverged,
  kPreprocessing,
  kNoHead,
  kSelection,
  kShape,
  kDimension,
  kVarianceUndefined,
  kLayoutMismatch,
  kInvalidTrainingSet,
  kPoolExhausted,
  kTooSmallPool,
  kSelectionDegenerate,
  kResizeContract,
  kDivergedCandidate,
  kEmptyInput,
  kEmptyTrainingSet,
  kEmptyId,
  kTopK,
  kConfig,
  kArtifactMissing,
  kIo,
  kFatal,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// CLI can map it onto an exit status and tests can assert on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bnleak

#endif  // BNLEAK_ERROR_H_

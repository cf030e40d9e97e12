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

#include "bnleak/error.h"

namespace bnleak {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidDataset: return "invalid-dataset";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kPreprocessing: return "preprocessing";
    case ErrorCode::kNoHead: return "no-head";
    case ErrorCode::kSelection: return "selection";
    case ErrorCode::kShape: return "invalid-shape";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kVarianceUndefined: return "variance-undefined";
    case ErrorCode::kLayoutMismatch: return "layout-mismatch";
    case ErrorCode::kInvalidTrainingSet: return "invalid-training-set";
    case ErrorCode::kPoolExhausted: return "pool-exhausted";
    case ErrorCode::kTooSmallPool: return "too-small-pool";
    case ErrorCode::kSelectionDegenerate: return "selection-degenerate";
    case ErrorCode::kResizeContract: return "resize-contract";
    case ErrorCode::kDivergedCandidate: return "diverged-candidate";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kEmptyTrainingSet: return "empty-training-set";
    case ErrorCode::kEmptyId: return "empty-id";
    case ErrorCode::kTopK: return "top-k";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kArtifactMissing: return "artifact-missing";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFatal: return "fatal";
  }
  return "unknown";
}

}  // namespace bnleak

#pragma once

#include <stdexcept>
#include <string>

namespace bonekin {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define BONEKIN_ERROR(Name)            \
  struct Name : Error {                \
    using Error::Error;                \
  }

BONEKIN_ERROR(ForestError);
// A cycle among non-root joints also leaves those joints disconnected from
// the root, so CycleError is a refinement of ForestError.
struct CycleError : ForestError {
  using ForestError::ForestError;
};
BONEKIN_ERROR(IndexError);
BONEKIN_ERROR(DegenerateBoneError);
BONEKIN_ERROR(ZeroDirectionError);
BONEKIN_ERROR(BehindCameraError);
BONEKIN_ERROR(ShapeError);
BONEKIN_ERROR(ConfigError);
BONEKIN_ERROR(BatchTooSmallError);
BONEKIN_ERROR(NonFiniteGradientError);
BONEKIN_ERROR(NonFiniteLossError);
BONEKIN_ERROR(TooShortError);
BONEKIN_ERROR(DegenerateFrameError);
BONEKIN_ERROR(EmptyDatasetError);
BONEKIN_ERROR(FormatError);
BONEKIN_ERROR(TopologyMismatchError);

#undef BONEKIN_ERROR

}  // namespace bonekin

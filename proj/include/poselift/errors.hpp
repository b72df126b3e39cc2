#pragma once

#include <stdexcept>
#include <string>

namespace poselift {

#define POSELIFT_ERROR_TYPE(NAME)                         \
  struct NAME : std::runtime_error {                      \
    explicit NAME(const std::string& msg)                 \
        : std::runtime_error(#NAME ": " + msg) {}         \
  };

POSELIFT_ERROR_TYPE(ShapeMismatch)
POSELIFT_ERROR_TYPE(NotScalar)
POSELIFT_ERROR_TYPE(NonFinite)
POSELIFT_ERROR_TYPE(NonUnitDirection)
POSELIFT_ERROR_TYPE(DegenerateFit)
POSELIFT_ERROR_TYPE(DegeneratePose)
POSELIFT_ERROR_TYPE(CameraSamplingExhausted)
POSELIFT_ERROR_TYPE(EmptyDataset)
POSELIFT_ERROR_TYPE(MissingAnnotation)
POSELIFT_ERROR_TYPE(InvalidConfig)
POSELIFT_ERROR_TYPE(StageMismatch)
POSELIFT_ERROR_TYPE(ConfigMismatch)
POSELIFT_ERROR_TYPE(IoError)
POSELIFT_ERROR_TYPE(FormatError)
POSELIFT_ERROR_TYPE(ChecksumError)

#undef POSELIFT_ERROR_TYPE

}  // namespace poselift

#pragma once

#include <stdexcept>
#include <string>

namespace fgmae {

// Every failure raised by the library derives from Error; the concrete type
// names the contract that was violated.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FGMAE_DEFINE_ERROR(Name)                  \
  class Name : public Error {                     \
   public:                                        \
    explicit Name(const std::string& what)        \
        : Error(std::string(#Name ": ") + what) {} \
  };

FGMAE_DEFINE_ERROR(InvalidShape)
FGMAE_DEFINE_ERROR(InvalidParam)
FGMAE_DEFINE_ERROR(InvalidCube)
FGMAE_DEFINE_ERROR(DegenerateHeatmap)
FGMAE_DEFINE_ERROR(DegeneratePose)
FGMAE_DEFINE_ERROR(MissingAnnotation)
FGMAE_DEFINE_ERROR(GenerationFailure)
FGMAE_DEFINE_ERROR(NonFiniteGradient)
FGMAE_DEFINE_ERROR(IncompatibleCheckpoint)
FGMAE_DEFINE_ERROR(CorruptFile)
FGMAE_DEFINE_ERROR(IoError)

#undef FGMAE_DEFINE_ERROR

}  // namespace fgmae

#pragma once

#include <stdexcept>
#include <string>

namespace pestalk {

// Base class for all library errors. Subclasses name the failure mode so
// callers (and tests) can catch precisely.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PESTALK_DEFINE_ERROR(NAME)                                  \
  class NAME : public Error {                                       \
  public:                                                           \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

PESTALK_DEFINE_ERROR(EmptyInput);
PESTALK_DEFINE_ERROR(TooShort);
PESTALK_DEFINE_ERROR(BadDims);
PESTALK_DEFINE_ERROR(NumericalError);
PESTALK_DEFINE_ERROR(ZeroVector);
PESTALK_DEFINE_ERROR(EmptyLibrary);
PESTALK_DEFINE_ERROR(EmptySpeaker);
PESTALK_DEFINE_ERROR(MissingBase);
PESTALK_DEFINE_ERROR(FormatError);
PESTALK_DEFINE_ERROR(BadPartition);
PESTALK_DEFINE_ERROR(BadLabel);
PESTALK_DEFINE_ERROR(BadPairing);
PESTALK_DEFINE_ERROR(IncompatibleCheckpoint);
PESTALK_DEFINE_ERROR(SingularSystem);
PESTALK_DEFINE_ERROR(DegenerateTriangle);
PESTALK_DEFINE_ERROR(BadBasis);
PESTALK_DEFINE_ERROR(BadMask);
PESTALK_DEFINE_ERROR(IoError);

#undef PESTALK_DEFINE_ERROR

}  // namespace pestalk

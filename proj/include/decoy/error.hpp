#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace decoy {

enum class ErrorCode {
  DuplicateAppId,
  UnknownProcess,
  UnknownMethod,
  PermissionDenied,
  OutOfGrid,
  MultipleForeground,
  HiddenApiDenied,
  UnknownHandle,
  InvalidHook,
  IncompatibleTransform,
  MissingOriginal,
  EmptyPool,
  UnknownPool,
  UnknownTrace,
  SequenceGap,
  UnknownScenario,
  AssertionFailed,
  EmptyTrace,
  InvalidArgument,
  Parse,
  Io,
};

std::string_view to_string(ErrorCode c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace decoy

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fuselab {

enum class ErrorKind {
  BehindCamera,
  DegenerateRig,
  EpipoleDegenerate,
  InsufficientViews,
  IllConditioned,
  InvalidTemperature,
  InvalidArgument,
  ShapeError,
  SceneGenFailure,
  MissingPairParams,
  NumericalOverflow,
  NoTasks,
  WrongModelKind,
  MissingCheckpoint,
  MissingWorld,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// All library failures surface as this exception; `kind()` is the stable
/// classifier, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace fuselab

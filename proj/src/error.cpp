#include "fuselab/error.hpp"

namespace fuselab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::DegenerateRig: return "DegenerateRig";
    case ErrorKind::EpipoleDegenerate: return "EpipoleDegenerate";
    case ErrorKind::InsufficientViews: return "InsufficientViews";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::InvalidTemperature: return "InvalidTemperature";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::SceneGenFailure: return "SceneGenFailure";
    case ErrorKind::MissingPairParams: return "MissingPairParams";
    case ErrorKind::NumericalOverflow: return "NumericalOverflow";
    case ErrorKind::NoTasks: return "NoTasks";
    case ErrorKind::WrongModelKind: return "WrongModelKind";
    case ErrorKind::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorKind::MissingWorld: return "MissingWorld";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace fuselab

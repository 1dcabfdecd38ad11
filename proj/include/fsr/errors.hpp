#pragma once

#include <stdexcept>
#include <string>

namespace fsr {

// Base of every error thrown by the library. Messages always name the
// offending input (axis, path, key, step) so callers can surface them as is.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };
class DatasetError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

}  // namespace fsr

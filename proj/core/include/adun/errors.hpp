#pragma once

#include <stdexcept>
#include <string>

namespace adun {

/// Invalid argument or configuration value (CLI exit code 2).
class ParamError : public std::invalid_argument {
public:
  explicit ParamError(const std::string& what) : std::invalid_argument(what) {}
};

/// Incompatible shapes between matrices/vectors (CLI exit code 2).
class DimensionError : public ParamError {
public:
  explicit DimensionError(const std::string& what) : ParamError(what) {}
};

/// Numeric-domain failure, e.g. non-finite loss or a score outside (0,1)
/// (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure carrying the offending path (CLI exit code 4).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace adun

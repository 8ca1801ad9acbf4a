#pragma once

#include <stdexcept>
#include <string>

namespace ttcshield {

// Malformed input, violated precondition, or inconsistent configuration.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Filesystem failures: unreadable, unwritable, or missing paths.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ttcshield

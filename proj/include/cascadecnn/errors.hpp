#pragma once

#include <stdexcept>
#include <string>

namespace cascadecnn {

/// A search found no configuration satisfying the requested constraint
/// (error tolerance, platform resources, ...).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// A missing or malformed input file or upstream artifact.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cascadecnn

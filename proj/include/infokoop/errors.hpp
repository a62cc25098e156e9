#pragma once

#include <stdexcept>
#include <string>

namespace infokoop {

// Invalid input: wrong shapes, violated preconditions, malformed files.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failure on otherwise valid input: singular factorizations,
// non-finite losses, unbracketed roots.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace infokoop

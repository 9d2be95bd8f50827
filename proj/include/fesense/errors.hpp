#pragma once

#include <stdexcept>
#include <string>

namespace fesense {

// Bad user input: malformed config, parameter out of range, grid mismatch.
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

// Failure while touching the filesystem.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical or physical failure during a computation that was fed valid
// input: rate bound exceeded, positivity lost, fit did not converge.
class simulation_error : public std::runtime_error {
 public:
  explicit simulation_error(const std::string& what) : std::runtime_error(what) {}
};

// Post-hoc check of a finished run found a mismatch.
class verification_error : public std::runtime_error {
 public:
  explicit verification_error(const std::string& what) : std::runtime_error(what) {}
};

// Warnings go through a settable handler so library code never owns a
// stream; default prints to stderr.
using warning_handler = void (*)(const std::string&);
warning_handler set_warning_handler(warning_handler h);
void warn(const std::string& message);

}  // namespace fesense

#pragma once

#include <stdexcept>
#include <string>

namespace shapefit {

/// File/usage problems: missing files, parse failures, bad arguments.
/// The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failures of a computation on valid inputs (empty mask, non-closed mesh, ...).
/// The CLI maps these to exit code 1.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace shapefit

#pragma once

// Error taxonomy shared by the library and the CLI. The CLI maps each class
// onto a process exit code: validation 1, I/O 2, judge endpoint 3.

#include <stdexcept>
#include <string>

namespace markaudit {

/// Bad inputs: malformed records, violated preconditions, unknown labels.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem trouble: unreadable inputs, unwritable outputs.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// The remote judge endpoint misbehaved beyond the retry budget.
struct JudgeEndpointError : std::runtime_error {
    explicit JudgeEndpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace markaudit

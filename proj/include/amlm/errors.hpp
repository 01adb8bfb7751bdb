#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace amlm {

// I/O failures: missing files, unreadable or unwritable paths. CLI exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid inputs: bad config keys, malformed vocab files, incompatible artifacts.
// CLI exit code 3.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or incompatible serialized files: bad magic, truncation, version skew.
// CLI exit code 3.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or activations during training. CLI exit code 4.
struct DivergenceError : std::runtime_error {
    int64_t step;
    DivergenceError(int64_t step_, const std::string& what_)
        : std::runtime_error(what_), step(step_) {}
};

}  // namespace amlm

#pragma once

#include <stdexcept>

namespace resd {

// Bad parameters or impossible parameter combinations. CLI exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed, non-finite, or otherwise unusable input data. CLI exit code 3.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failures that arise mid-run on valid config and input, e.g. an exhausted
// forecast horizon with refitting disabled. CLI exit code 4.
struct stream_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace resd

#pragma once

#include <stdexcept>
#include <string>

namespace mmlc {

// Bad user input: malformed config, out-of-range parameter, impossible request.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training or encoding produced a non-finite or otherwise unusable value.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem trouble: missing file, unreadable CSV, failed write.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mmlc

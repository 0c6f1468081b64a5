#pragma once

#include <stdexcept>
#include <string>

namespace segsel {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem and encoding problems (missing files, malformed rasters, ...).
struct IoError : Error {
  using Error::Error;
};

// Malformed manifests, model files and other structured inputs.
struct ParseError : Error {
  using Error::Error;
};

// Invalid parameters or configuration combinations.
struct ConfigError : Error {
  using Error::Error;
};

// A segmentation backend misbehaved. `kind` tells the failure classes apart
// so callers can decide between retry, skip and abort.
struct BackendError : Error {
  enum class Kind {
    launch_failure,
    nonzero_exit,
    timeout,
    bad_output,          // unreadable / missing output file
    dimension_mismatch,  // output size differs from the input image
    label_out_of_vocab,
  };

  BackendError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
  Kind kind;
};

}  // namespace segsel

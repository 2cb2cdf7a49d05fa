#pragma once

#include <stdexcept>

namespace sefoss {

// Invalid or inconsistent run configuration. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable, malformed or version-mismatched artifacts (checkpoints,
// datasets, output paths). Maps to CLI exit code 3.
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sefoss

#pragma once

#include <stdexcept>
#include <string>

namespace mtlopt {

// Exit-code mapping used by the CLI: ConfigError -> 2,
// NumericError / IntegrityError -> 3, ArtifactError -> 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtlopt

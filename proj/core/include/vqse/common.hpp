// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_COMMON_HPP_
#define VQSE_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace vqse {

// Thrown when an operation receives data that violates its preconditions
// (shape mismatches, out-of-range values, too-short signals).
class InvalidInputError : public std::invalid_argument {
 public:
  explicit InvalidInputError(const std::string& msg)
      : std::invalid_argument(msg) {}
};

// Thrown when a configuration is internally inconsistent or incompatible
// with the requested operation (non-reconstructing STFT setups, empty
// codebook partitions, missing manifests, mode/data mismatches).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require_input(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInputError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline constexpr int kSampleRate = 16000;

}  // namespace vqse

#endif  // VQSE_COMMON_HPP_

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qnet {

// Diagnostic categories shared by every module. The numeric values are part of
// the C API (qnet_status) and of the CLI exit codes, so only append.
enum class ErrorCode {
  InvalidArgument = 1,  // contract violation on an input
  NotFound = 2,         // unknown preset / label
  Unclassified = 3,     // wavelength outside all bands
  Configuration = 4,    // missing or malformed configuration entry
  Domain = 5,           // operation undefined for this input (e.g. EmmaLocal path)
  Synthesis = 6,        // distribution map cannot be realized by the node
  NotRouted = 7,        // (channel, endpoint) not routed by a configuration
  Framing = 8,          // AMC preamble / length mismatch
  Integrity = 9,        // AMC CRC mismatch
  Semantic = 10,        // AMC payload is not a partial permutation
  Indeterminate = 11,   // zero denominator (calibration, rate ratio)
  Io = 12,
  Internal = 13,
};

std::string_view error_category(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace qnet

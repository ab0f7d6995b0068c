#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmdcal {

enum class Errc {
  kShapeMismatch,
  kNonFinite,
  kNotScalar,
  kLengthMismatch,
  kEmptySample,
  kPOutOfRange,
  kDegenerateVariance,
  kTooFewPoints,
  kFileNotFound,
  kColumnMissing,
  kParseError,
  kSeriesTooShort,
  kFractionInvalid,
  kEmptySplit,
  kMissingCheckpoint,
  kIncompatibleGrids,
  kConfigError,
  kDiverged,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mmdcal

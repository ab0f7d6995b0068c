#include "mmdcal/errors.hpp"

namespace mmdcal {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kNonFinite: return "NonFinite";
    case Errc::kNotScalar: return "NotScalar";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmptySample: return "EmptySample";
    case Errc::kPOutOfRange: return "POutOfRange";
    case Errc::kDegenerateVariance: return "DegenerateVariance";
    case Errc::kTooFewPoints: return "TooFewPoints";
    case Errc::kFileNotFound: return "FileNotFound";
    case Errc::kColumnMissing: return "ColumnMissing";
    case Errc::kParseError: return "ParseError";
    case Errc::kSeriesTooShort: return "SeriesTooShort";
    case Errc::kFractionInvalid: return "FractionInvalid";
    case Errc::kEmptySplit: return "EmptySplit";
    case Errc::kMissingCheckpoint: return "MissingCheckpoint";
    case Errc::kIncompatibleGrids: return "IncompatibleGrids";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kDiverged: return "Diverged";
  }
  return "Unknown";
}

}  // namespace mmdcal

#include "gsdot/error.hpp"

namespace gsdot {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Config: return "config";
    case ErrorCode::CacheIo: return "cache-io";
    case ErrorCode::CacheBadMagic: return "cache-bad-magic";
    case ErrorCode::CacheTruncated: return "cache-truncated";
    case ErrorCode::CacheChecksum: return "cache-checksum";
    case ErrorCode::CacheMismatch: return "cache-mismatch";
    case ErrorCode::NonFiniteLoss: return "non-finite-loss";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::UndefinedCenterOfMass: return "undefined-center-of-mass";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace gsdot

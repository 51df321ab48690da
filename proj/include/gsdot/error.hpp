#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace gsdot {

enum class ErrorCode {
  InvalidArgument,
  Config,
  CacheIo,
  CacheBadMagic,
  CacheTruncated,
  CacheChecksum,
  CacheMismatch,
  NonFiniteLoss,
  Divergence,
  UndefinedCenterOfMass,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the reconstruction loop when the loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, Eigen::VectorXd theta, const std::string& what)
      : Error(ErrorCode::Divergence, what),
        iteration_(iteration),
        theta_(std::move(theta)) {}

  int iteration() const noexcept { return iteration_; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }

 private:
  int iteration_;
  Eigen::VectorXd theta_;
};

[[noreturn]] inline void throw_invalid(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace gsdot

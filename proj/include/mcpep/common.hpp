#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mcpep {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Random engine used across the library. Every stochastic routine takes one
/// by reference so trajectories are reproducible from a seed.
using Rng = std::mt19937_64;

/// Rigid transform: x_parent = rotation * x_child + origin.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 origin = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + origin; }
  Pose compose(const Pose& child) const {
    return Pose{rotation * child.rotation, rotation * child.origin + origin};
  }
};

Mat3 rpy_to_rotation(const Vec3& rpy);
Mat3 axis_angle(const Vec3& unit_axis, double angle);
Mat3 skew(const Vec3& v);

// Error taxonomy. The CLI maps these onto process exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range input (exit code 1).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A file that cannot be parsed at all.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

/// Well-formed input that violates a structural requirement (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical solver did not terminate (exit code 3).
class SolverError : public Error {
 public:
  SolverError(const std::string& what, VecX best_iterate)
      : Error(what), best_iterate_(std::move(best_iterate)) {}
  const VecX& best_iterate() const { return best_iterate_; }

 private:
  VecX best_iterate_;
};

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kOff = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log(LogLevel level, const std::string& message);

}  // namespace mcpep

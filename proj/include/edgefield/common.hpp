#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace edgefield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidPrimitive : public Error {
 public:
  using Error::Error;
};

class DegenerateScene : public Error {
 public:
  using Error::Error;
};

class MissingTape : public Error {
 public:
  using Error::Error;
};

class InvalidDepth : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Raised by the refinement loop when a loss term turns non-finite.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int iteration, std::string term)
      : Error("non-finite loss '" + term + "' at iteration " + std::to_string(iteration)),
        iteration_(iteration),
        term_(std::move(term)) {}

  int iteration() const { return iteration_; }
  const std::string& term() const { return term_; }

 private:
  int iteration_;
  std::string term_;
};

inline constexpr const char* kVersion = "0.3.0";

}  // namespace edgefield

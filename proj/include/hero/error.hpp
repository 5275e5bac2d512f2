/**
 * \file error.hpp
 * \brief Exception types raised across the odometry pipeline.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace hero {

/** \brief Base class for all library errors */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/** \brief Rotation angle too close to pi for a well-conditioned logarithm */
class AngleNearPi : public Error {
 public:
  using Error::Error;
};

/** \brief Cartesian resolution is not an integer multiple of the range resolution */
class ResolutionMismatch : public Error {
 public:
  using Error::Error;
};

/** \brief Image size not divisible by the network's downsampling factor */
class SizeIndivisible : public Error {
 public:
  using Error::Error;
};

/** \brief Sample coordinates outside the map */
class OutOfBounds : public Error {
 public:
  using Error::Error;
};

/** \brief Backpropagation requested without recorded activations */
class NoForwardTape : public Error {
 public:
  using Error::Error;
};

/** \brief Gauss-Newton failed to decrease the cost */
class SolverDiverged : public Error {
 public:
  using Error::Error;
};

/** \brief Normal equations are not positive definite */
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/** \brief Trajectory too short for the requested sub-sequence lengths */
class TooShort : public Error {
 public:
  using Error::Error;
};

/** \brief Malformed input file */
class ParseError : public Error {
 public:
  using Error::Error;
};

/** \brief Configuration value out of its valid domain; message carries the field path */
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace hero

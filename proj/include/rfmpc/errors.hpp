#pragma once

#include <stdexcept>
#include <string>

namespace rfmpc {

struct NotSkewSymmetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidRotation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateMatrix : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingReference : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QpInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QpMaxIterations : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FactorizationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RateMapNearSingular : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoFeasibleSolution : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleTiming : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidRotationInFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rfmpc

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gad {

enum class ErrorKind {
  // graph construction
  IndexOutOfRange,
  SelfLoop,
  IsolatedNode,
  FeatureShapeMismatch,
  // numerics
  NotSymmetric,
  ConvergenceFailure,
  NotPositiveDefinite,
  DimensionTooLarge,
  // spectral
  DisconnectedGraph,
  BandwidthOutOfRange,
  // diffusion
  NonFiniteInput,
  SolverFailure,
  GraphMismatch,
  StateMismatch,
  // anisotropic
  DimensionMismatch,
  NonPositiveDelta,
  // model
  WidthMismatch,
  NonFiniteActivation,
  TapeConsumed,
  LengthMismatch,
  // harness
  ParseError,
  ValidationError,
  ConfigError,
  ConfigMismatch,
  DivergenceDetected,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::IsolatedNode: return "IsolatedNode";
    case ErrorKind::FeatureShapeMismatch: return "FeatureShapeMismatch";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::BandwidthOutOfRange: return "BandwidthOutOfRange";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::GraphMismatch: return "GraphMismatch";
    case ErrorKind::StateMismatch: return "StateMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonPositiveDelta: return "NonPositiveDelta";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::TapeConsumed: return "TapeConsumed";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gad

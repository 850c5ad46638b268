#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pieceval {

enum class ErrorKind {
  // rules engine
  BadFen,
  IllegalMove,
  AmbiguousSan,
  UnparseableSan,
  NoMatchingMove,
  // archive handling
  ParseError,
  IoError,
  // numerics
  RankDeficient,
  NotConverged,
  InsufficientPoints,
  IllConditioned,
  NoCandidates,
  FlatObjective,
  NonStationary,
  InsufficientVariation,
  PawnNearZero,
  // engine protocol
  EngineTimeout,
  ProtocolViolation,
  IllegalEngineMove,
  // configuration
  Usage,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadFen: return "BadFen";
    case ErrorKind::IllegalMove: return "IllegalMove";
    case ErrorKind::AmbiguousSan: return "AmbiguousSan";
    case ErrorKind::UnparseableSan: return "UnparseableSan";
    case ErrorKind::NoMatchingMove: return "NoMatchingMove";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::NoCandidates: return "NoCandidates";
    case ErrorKind::FlatObjective: return "FlatObjective";
    case ErrorKind::NonStationary: return "NonStationary";
    case ErrorKind::InsufficientVariation: return "InsufficientVariation";
    case ErrorKind::PawnNearZero: return "PawnNearZero";
    case ErrorKind::EngineTimeout: return "EngineTimeout";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::IllegalEngineMove: return "IllegalEngineMove";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

// Everything the library throws derives from this; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit codes used by the command line tool.
enum class ExitCode : int { Success = 0, Usage = 1, DataError = 2, NumericalFailure = 3 };

inline ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return ExitCode::Usage;
    case ErrorKind::RankDeficient:
    case ErrorKind::NotConverged:
    case ErrorKind::InsufficientPoints:
    case ErrorKind::IllConditioned:
    case ErrorKind::NoCandidates:
    case ErrorKind::FlatObjective:
    case ErrorKind::NonStationary:
    case ErrorKind::InsufficientVariation:
    case ErrorKind::PawnNearZero:
      return ExitCode::NumericalFailure;
    default:
      return ExitCode::DataError;
  }
}

}  // namespace pieceval

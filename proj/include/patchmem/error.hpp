#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patchmem {

enum class ErrorCode {
  InvariantViolation,
  InvalidSession,
  CorruptMemoryFile,
  EmbeddingUnavailable,
  IndexFailure,
  NoMatch,
  NotFound,
  OutsideWorkspace,
  BadPattern,
  AlreadyExists,
  AmbiguousMatch,
  Timeout,
  SessionDead,
  SnapshotMissing,
  OracleTimeout,
  BuildToolMissing,
  InvalidOracle,
  GatewayExhausted,
  MalformedToolCall,
  TransportError,
  LocalizationFailure,
  EmptyPatch,
  UnreadableCorpus,
  ConfigError,
  BadArguments,
  UnknownTool,
  IoError,
  SyntaxError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the engine carries a stable code so callers can
/// route on it (tool results, CLI exit codes, session termination reasons).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace patchmem

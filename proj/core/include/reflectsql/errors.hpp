#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace reflectsql {

enum class ErrorCode {
  TransportFailure,
  CassetteMiss,
  CassetteConflict,
  ScriptedExhausted,
  UnreadableDatabase,
  IntrospectionFailure,
  UnknownTable,
  VersionMismatch,
  CorruptFile,
  ContractViolation,
  StaleVersion,
  ConfigError,
  DatasetError,
  UnparseableSql,
  MeasurementError,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Contract or gateway failure attributed to a pipeline stage.
class StageError : public Error {
public:
  StageError(ErrorCode code, std::string stage, std::string message)
      : Error(code, std::move(message)), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace reflectsql

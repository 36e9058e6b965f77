#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace malcall {

// Base of every error the library throws. `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class ParseError : public Error {
public:
  ParseError(std::size_t line, std::string field, const std::string& reason)
      : Error("parse_error", "line " + std::to_string(line) + ": field '" + field + "': " + reason),
        line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

private:
  std::size_t line_;
  std::string field_;
};

struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract_error", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct OrderingError : Error {
  explicit OrderingError(const std::string& what) : Error("ordering_error", what) {}
};

struct SchemaMismatch : Error {
  explicit SchemaMismatch(const std::string& what) : Error("schema_mismatch", what) {}
};

struct CorruptPayload : Error {
  explicit CorruptPayload(const std::string& what) : Error("corrupt_payload", what) {}
};

struct VersionMismatch : Error {
  explicit VersionMismatch(const std::string& what) : Error("version_mismatch", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training_error", what) {}
};

}  // namespace malcall

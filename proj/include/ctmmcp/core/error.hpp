// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctmmcp {

enum class ErrorKind {
  DimensionMismatch,
  NonFiniteInput,
  WindowTooShort,
  EmptySlab,
  EmptyOutcomeList,
  BranchPanic,
  NoCandidates,
  NonFiniteMetadata,
  MalformedJson,
  SchemaViolation,
  UnknownTool,
  TransportClosed,
  IdMismatch,
  MalformedTable,
  ParseError,
  EmptyLogs,
  ConfigError,
  IoError,
  MalformedWeights,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::EmptySlab: return "EmptySlab";
    case ErrorKind::EmptyOutcomeList: return "EmptyOutcomeList";
    case ErrorKind::BranchPanic: return "BranchPanic";
    case ErrorKind::NoCandidates: return "NoCandidates";
    case ErrorKind::NonFiniteMetadata: return "NonFiniteMetadata";
    case ErrorKind::MalformedJson: return "MalformedJson";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::UnknownTool: return "UnknownTool";
    case ErrorKind::TransportClosed: return "TransportClosed";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::MalformedTable: return "MalformedTable";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyLogs: return "EmptyLogs";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MalformedWeights: return "MalformedWeights";
  }
  return "Unknown";
}

/// Every failure raised by the library. `path` names the offending field
/// (JSON path or tensor name) and `line` the 1-based input line, when known.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string path = {}, std::size_t line = 0)
      : std::runtime_error(format(kind, message, path, line)),
        kind_(kind),
        message_(std::move(message)),
        path_(std::move(path)),
        line_(line) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(ErrorKind kind, const std::string& message, const std::string& path,
                            std::size_t line) {
    std::string out{to_string(kind)};
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    if (!path.empty()) out += " at '" + path + "'";
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorKind kind_;
  std::string message_;
  std::string path_;
  std::size_t line_;
};

inline void require_dim(std::size_t actual, std::size_t expected, std::string_view what) {
  if (actual != expected) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) + ", got " +
                    std::to_string(actual));
  }
}

}  // namespace ctmmcp

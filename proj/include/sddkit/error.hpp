#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdd {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (manifest or config line).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value (dimensions, block index, ranges).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: unreadable, unwritable or missing resources.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Sequences that must line up (modalities, sessions, members) do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Binary file that does not decode; carries the byte offset of the fault.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace sdd

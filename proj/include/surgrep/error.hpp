#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace surgrep {

/// Base for every error raised by the pipeline.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record; carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// A label name or index that is not part of the vocabulary.
class UnknownLabelError : public Error {
public:
  using Error::Error;
};

/// Caption text that does not conform to the caption grammar.
class GrammarError : public Error {
public:
  GrammarError(const std::string& what, std::size_t offset)
      : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// Violated precondition on an operation's arguments.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Generated and reference records whose keys do not line up.
class AlignmentError : public Error {
public:
  using Error::Error;
};

/// The report endpoint could not be reached after every retry.
class TransportError : public Error {
public:
  using Error::Error;
};

/// The report endpoint answered with a non-success status.
class HttpStatusError : public Error {
public:
  HttpStatusError(const std::string& what, int status) : Error(what), status_(status) {}

  int status() const noexcept { return status_; }

private:
  int status_;
};

/// The environment variable holding the endpoint credential is unset or empty.
class MissingCredentialError : public Error {
public:
  using Error::Error;
};

}  // namespace surgrep

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coachpipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input at a known line of a line-oriented file.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A record that parsed but breaks a data invariant. `field()` names the
/// offending field using its on-disk name.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message,
                  std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string()) +
              "field '" + field + "': " + message),
        field_(std::move(field)),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An API precondition was violated by the caller (e.g. fitting a frozen model).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A pipeline step ran before the step that produces its input.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(std::string artifact, std::string producer)
      : Error("missing artifact '" + artifact + "'; run `" + producer +
              "` first"),
        artifact_(std::move(artifact)),
        producer_(std::move(producer)) {}
  const std::string& artifact() const noexcept { return artifact_; }
  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string artifact_;
  std::string producer_;
};

}  // namespace coachpipe

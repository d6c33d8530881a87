#pragma once

#include <stdexcept>
#include <string>

namespace signattack {

// Base for every fatal condition raised by the library. The CLI turns these
// into a machine-readable error record and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

// Raised when a command is run before the artifact it consumes exists.
// `producer` names the command that creates the missing input.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& path, std::string producer)
      : Error("missing_artifact",
              "missing artifact '" + path + "'; run '" + producer + "' first"),
        producer_(std::move(producer)) {}
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

}  // namespace signattack

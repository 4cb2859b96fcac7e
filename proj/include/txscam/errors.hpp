#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace txscam {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or unreadable user input (files, records, configs, checkpoints).
class InputError : public Error {
 public:
  using Error::Error;
};

class UnreadableInput : public InputError {
 public:
  using InputError::InputError;
};

class MalformedRecord : public InputError {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : InputError("malformed record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownNode : public InputError {
 public:
  using InputError::InputError;
};

class NoEdges : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class SingleClassDataset : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// Failure writing outputs.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace txscam

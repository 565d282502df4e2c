#pragma once

#include <stdexcept>
#include <string>

namespace mtseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: flags, config values, out-of-range hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string message, int line) : Error(std::move(message)), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace mtseg

#pragma once

#include <stdexcept>
#include <string>

namespace freezelab {

// Base for every error the library raises on bad input or violated contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed files, CSV/JSON content, label lines. Maps to CLI exit code 2.
class ParseError : public Error {
 public:
  using Error::Error;
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace freezelab

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace eqlift {

// Every library failure derives from Error and carries a stable short code
// used by the CLI for its one-line machine-parseable error output.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

struct DegenerateData : Error {
  explicit DegenerateData(const std::string& what) : Error("degenerate-data", what) {}
};

struct InvalidGeometry : Error {
  explicit InvalidGeometry(const std::string& what) : Error("invalid-geometry", what) {}
};

struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& what) : Error("numerical-failure", what) {}
};

struct ParseError : Error {
  ParseError(const std::string& what, long line)
      : Error("parse-error", what), line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation-error", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io-error", what) {}
};

}  // namespace eqlift

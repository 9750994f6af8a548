//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_ERRORS_H_
#define CANONDIFF_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canondiff {

class Error: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shape, range, arity).
class ContractViolation: public Error {
public:
  using Error::Error;
};

class NumericFailure: public Error {
public:
  NumericFailure(const std::string &what, std::size_t node = 0,
                 std::string op = {})
      : Error(what), node_(node), op_(std::move(op)) { }

  std::size_t node() const noexcept { return node_; }
  const std::string &op() const noexcept { return op_; }

private:
  std::size_t node_;
  std::string op_;
};

class DegenerateFrame: public Error {
public:
  using Error::Error;
};

class DegenerateSpectrum: public Error {
public:
  using Error::Error;
};

class ParseError: public Error {
public:
  ParseError(const std::string &what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) { }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IoError: public Error {
public:
  using Error::Error;
};

}  // namespace canondiff

#endif  // CANONDIFF_ERRORS_H_

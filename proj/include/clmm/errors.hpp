#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace clmm {

// Problems with user-supplied inputs (files, model specs, argument domains).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model indices out of bounds, not strictly increasing, or mismatched.
class InvalidSpecError : public InputError {
 public:
  using InputError::InputError;
};

// Vector/matrix shapes that do not line up.
class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

// Numeric argument outside its domain (negative variance, level outside (0,1), ...).
class DomainError : public InputError {
 public:
  using InputError::InputError;
};

// Rank-deficient design; `columns` holds the 1-based offending column indices.
class RankError : public InputError {
 public:
  RankError(const std::string& what, std::vector<int> columns)
      : InputError(what), columns(std::move(columns)) {}
  std::vector<int> columns;
};

// Malformed CSV input; `line` is the 1-based line number.
class CsvError : public InputError {
 public:
  CsvError(const std::string& what, long line) : InputError(what), line(line) {}
  long line;
};

// Bad scenario file; `key` names the offending entry when known.
class ScenarioError : public InputError {
 public:
  explicit ScenarioError(const std::string& what, std::string key = {})
      : InputError(what), key(std::move(key)) {}
  std::string key;
};

// The response carries (numerically) no residual variation; v^2 -> 0 would
// make log(v^2) diverge, so the fit refuses instead.
class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A simulation study with too many failed replicates.
class StudyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clmm

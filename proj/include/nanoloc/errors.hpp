#pragma once

#include <stdexcept>
#include <string>

namespace nanoloc {

/// Argument outside the domain where a model is defined (e.g. f <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input document failed schema or invariant validation. `where` names the
/// offending element (a JSON path, a segment id, ...).
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// An operation was invoked while its precondition does not hold.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace nanoloc

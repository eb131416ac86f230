#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace avr {

/// Argument outside the mathematical domain of an operation (bad scale,
/// singular transform, shape mismatch, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network failure talking to an external service. `cause` is a short
/// machine-readable tag ("timeout", "connection", "http_status", "malformed").
class TransportError : public std::runtime_error {
 public:
  TransportError(std::string cause, const std::string& what)
      : std::runtime_error(what), cause_(std::move(cause)) {}
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::string cause_;
};

/// A record or payload broke a stated invariant. `index` is the record
/// position when the failure is per-record, otherwise npos.
class ValidationError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ValidationError(std::size_t index, std::string field, const std::string& what)
      : std::runtime_error(what), index_(index), field_(std::move(field)) {}

  std::size_t index() const noexcept { return index_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t index_;
  std::string field_;
};

class AggregationError : public std::runtime_error {
 public:
  AggregationError(std::vector<std::string> offenders, const std::string& what)
      : std::runtime_error(what), offenders_(std::move(offenders)) {}
  const std::vector<std::string>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

}  // namespace avr

#pragma once

#include <stdexcept>
#include <string>

namespace fairadapter {

// Invalid data, undefined metrics, shape mismatches. The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public DomainError {
 public:
  using DomainError::DomainError;
};

// A metric whose denominator is empty (no real records, empty score list, ...).
class UndefinedMetricError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Unreadable or unwritable files. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad invocations and configuration: unknown keys, out-of-range values. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairadapter

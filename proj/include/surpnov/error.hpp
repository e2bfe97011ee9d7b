#pragma once

#include <stdexcept>
#include <string>

namespace surpnov {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

class StatsError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace surpnov

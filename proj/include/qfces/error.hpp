#pragma once

#include <stdexcept>
#include <string>

namespace qfces {

// Input or invariant problems. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything that went wrong talking to a completion backend. CLI exit code 2.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AuthError : public BackendError {
 public:
  using BackendError::BackendError;
};

class HttpStatusError : public BackendError {
 public:
  HttpStatusError(int status, const std::string& what) : BackendError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace qfces

#pragma once

#include <stdexcept>
#include <string>

namespace selfj {

// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport or protocol failure from an endpoint. status is 0 when no HTTP
// status was received (connection refused, timeout).
class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

}  // namespace selfj

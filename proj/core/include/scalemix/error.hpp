#pragma once

#include <stdexcept>
#include <string>

namespace scalemix {

enum class ErrorKind {
  parameter,
  domain,
  coverage,
  degeneracy,
  numeric,
  factorization,
  validation,
  ingestion,
  io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// 1 for bad input, 2 for numerical trouble.
int exit_code(ErrorKind kind);

inline void require(bool ok, ErrorKind kind, const std::string& msg) {
  if (!ok) throw Error(kind, msg);
}

}  // namespace scalemix

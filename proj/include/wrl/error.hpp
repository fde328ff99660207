#pragma once

#include <stdexcept>
#include <string>

namespace wrl {

// Exit codes are part of the CLI contract.
enum class ExitCode : int { Ok = 0, Usage = 1, Data = 2, Integrity = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::Usage, what) {}
};

/// Bad or missing inputs: invariant violations, unknown ids, malformed files.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::Data, what) {}
};

/// Stored bytes do not match their digest.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ExitCode::Integrity, what) {}
};

/// Training loss went non-finite or blew past the divergence bound.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ExitCode::Data, what) {}
};

}  // namespace wrl

#pragma once

#include <stdexcept>
#include <string>

namespace forge {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad or incomplete run configuration. CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

class IngestError : public Error {
public:
  using Error::Error;
};

class InvalidDocument : public Error {
public:
  using Error::Error;
};

class TemplateError : public Error {
public:
  using Error::Error;
};

class ExtractionError : public Error {
public:
  using Error::Error;
};

class CleaningError : public Error {
public:
  using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

class AssemblyError : public Error {
public:
  using Error::Error;
};

class EvalError : public Error {
public:
  using Error::Error;
};

class ScoreError : public Error {
public:
  using Error::Error;
};

// Mid-run stage failure. CLI maps this to exit code 3.
class StageError : public Error {
public:
  using Error::Error;
};

// Provider-side failures. Only some kinds are worth retrying.
class GatewayError : public Error {
public:
  enum class Kind { auth, rate_limited, timeout, provider, parse };

  GatewayError(Kind kind, int status, const std::string& what)
      : Error(what), kind_(kind), status_(status) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }

  bool retryable() const {
    switch (kind_) {
      case Kind::rate_limited:
      case Kind::timeout:
        return true;
      case Kind::provider:
        return status_ >= 500;
      default:
        return false;
    }
  }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::auth: return "auth";
      case Kind::rate_limited: return "rate_limited";
      case Kind::timeout: return "timeout";
      case Kind::provider: return "provider";
      case Kind::parse: return "parse";
    }
    return "unknown";
  }

private:
  Kind kind_;
  int status_;
};

}  // namespace forge

#pragma once

#include <stdexcept>
#include <string>

namespace essayfb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (missing column, unparsable row, bad JSON).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

// Transport failure or server error that survived all retries.
class EndpointError : public Error {
 public:
  using Error::Error;
};

// 4xx from the endpoint; retrying will not help.
class ConfigurationError : public Error {
 public:
  ConfigurationError(const std::string& what, int status) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// The prompt does not fit the model context.
class ContentError : public Error {
 public:
  ContentError(const std::string& what, std::size_t prompt_chars)
      : Error(what), prompt_chars_(prompt_chars) {}
  std::size_t prompt_chars() const { return prompt_chars_; }

 private:
  std::size_t prompt_chars_;
};

class JudgmentError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

// Unknown annotator token or item.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace essayfb

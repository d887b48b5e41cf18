#pragma once

#include <stdexcept>
#include <string>

namespace archrecon {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape propagation or hyperparameter domain violation.
class InvalidArchitecture : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Trace, annotation, manifest or checkpoint that fails to parse or validate.
class MalformedFile : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InferenceError : public Error {
 public:
  using Error::Error;
};

class LabelSetError : public Error {
 public:
  using Error::Error;
};

class KindMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace archrecon

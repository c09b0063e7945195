/* Copyright 2026 The Patchforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PATCHFORGE_ERRORS_HPP_
#define PATCHFORGE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchforge {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A region does not fit inside the tensor it addresses.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (bad sizes, empty regions).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. `offset` is the byte position of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

// Operation not available for this kind of object (e.g. gradients of a
// remote oracle).
class Unsupported : public Error {
 public:
  using Error::Error;
};

// Oracle output does not honor the dimension contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// Remote side answered with a non-200 status.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& body)
      : Error("service returned status " + std::to_string(status) + ": " +
              body),
        status_(status),
        body_(body) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace patchforge

#endif  // PATCHFORGE_ERRORS_HPP_

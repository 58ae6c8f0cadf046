#ifndef HMVAE_ERRORS_HPP_
#define HMVAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace hmvae {

/// Dimension/shape mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid argument value (counts, indices, configuration).
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Input outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

/// Non-finite value produced where a finite one is required. Carries the
/// name of the offending term or parameter block.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class BadMagicError : public IoError {
 public:
  explicit BadMagicError(const std::string& msg) : IoError(msg) {}
};

class BadVersionError : public IoError {
 public:
  explicit BadVersionError(const std::string& msg) : IoError(msg) {}
};

class TruncatedError : public IoError {
 public:
  explicit TruncatedError(const std::string& msg) : IoError(msg) {}
};

/// Structurally readable file whose contents violate an invariant
/// (e.g. label count != row count).
class ValidationError : public IoError {
 public:
  explicit ValidationError(const std::string& msg) : IoError(msg) {}
};

}  // namespace hmvae

#endif  // HMVAE_ERRORS_HPP_

#pragma once

#include <stdexcept>

namespace depthforge {

/// Input outside an operation's mathematical domain (nonpositive depth,
/// empty valid set, zero divisor, zero-norm feature row).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A sample whose affine normalization is undefined. Training loops skip
/// and count these.
class DegenerateSample : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace depthforge

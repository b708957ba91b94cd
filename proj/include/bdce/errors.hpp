#pragma once

#include <stdexcept>

namespace bdce {

/// Shape or argument violations: wrong sizes, invalid mode index, bad enum.
class dimension_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structurally valid input that is numerically meaningless, e.g. an all-zero
/// matrix passed to a rank-one factorization.
class degenerate_input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or diverged intermediate results.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bdce

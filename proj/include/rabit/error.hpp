#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rabit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Object is not in a state that permits the operation (e.g. missing w_fp).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t step, std::string layer)
      : Error("non-finite loss at step " + std::to_string(step) +
              " in layer '" + layer + "'"),
        step_(step),
        layer_(std::move(layer)) {}

  std::size_t step() const noexcept { return step_; }
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::size_t step_;
  std::string layer_;
};

namespace detail {

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

}  // namespace rabit

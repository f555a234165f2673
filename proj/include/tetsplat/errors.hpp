#pragma once

#include <stdexcept>
#include <string>

namespace tetsplat {

// Bad caller input: wrong sizes, out-of-range parameters, non-finite inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateTet : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pre-filtering left nothing to render.
class EmptyScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The optimizer produced a non-finite loss or gradient.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tetsplat

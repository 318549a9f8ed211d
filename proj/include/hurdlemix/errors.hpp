#pragma once

#include <stdexcept>
#include <string>

namespace hurdlemix {

// Malformed or incomplete input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sampler reached a state it cannot continue from: every cell of an
// allocation table underflowed, a truncation cap was hit, a slice expanded
// without bound (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hurdlemix

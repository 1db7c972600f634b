#pragma once

#include <stdexcept>
#include <string>

namespace glarmix {

// Bad inputs: dimension mismatches, out-of-range arguments, malformed specs.
class contract_error : public std::invalid_argument {
 public:
  explicit contract_error(const std::string& what) : std::invalid_argument(what) {}
};

// The recursion or an optimizer produced non-finite state.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, long when) : std::runtime_error(what), t(when) {}
  long t;  // 1-based time index where the state went non-finite, -1 if n/a
};

// A conditional distribution became numerically degenerate (zero variance).
class degenerate_error : public std::runtime_error {
 public:
  degenerate_error(const std::string& what, long when) : std::runtime_error(what), t(when) {}
  long t;
};

// The per-series mode search failed (non-concave exponent, iteration cap, ...).
class inner_failure : public std::runtime_error {
 public:
  inner_failure(const std::string& what, int series) : std::runtime_error(what), series_index(series) {}
  int series_index;  // -1 when not attached to a series yet
};

// Information matrix singular where an inverse is required.
class singular_error : public std::runtime_error {
 public:
  explicit singular_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace glarmix

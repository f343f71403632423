#pragma once

#include <stdexcept>
#include <string>

namespace sthawkes {

// Shape or index disagreement between arguments.
class DimensionError : public std::invalid_argument {
 public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed configuration or input file.
class InputError : public std::invalid_argument {
 public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite objective, singular design, degenerate parameters.
class NumericalError : public std::runtime_error {
 public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sthawkes

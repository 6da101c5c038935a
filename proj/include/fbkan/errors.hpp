#pragma once

#include <stdexcept>
#include <string>

namespace fbkan {

// Numerical breakdown (non-finite loss term, rank-deficient refit, ...).
// The message names the offending quantity so runs can be diagnosed.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a point is outside the support of every subdomain weight,
// i.e. the decomposition does not cover it.
class CoverageError : public std::runtime_error {
public:
    explicit CoverageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fbkan

#pragma once

#include <stdexcept>
#include <string>

namespace warp {

/// Malformed input: non-dyadic grids, unreadable files, invalid parameters.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An internal consistency check failed (non-finite recursion values,
/// large negative centered sums of squares).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight became zero during sequential Monte Carlo.
class WeightCollapse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace warp

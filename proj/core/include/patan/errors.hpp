#pragma once

#include <stdexcept>
#include <string>

namespace patan {

// Bad structural setup: incompatible shapes, invalid generator specs, unknown
// method/ablation names. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Bad data fed to a valid configuration: malformed files, out-of-range labels.
// Maps to CLI exit code 1.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: calling an operation in a state where it is meaningless
// (backward on a non-scalar, metrics over an empty sample list).
// Maps to CLI exit code 1.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown at runtime (NaN loss mid-training). Maps to CLI exit
// code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace patan

#pragma once
#include <stdexcept>
#include <string>

namespace saclab {

/// Malformed arguments: non-finite values, negative thresholds, shape mismatch.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration that cannot be realized (k > M, orthogonal design with T < Mq, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by exact enumeration when the action class is too large to list.
class TooLargeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ImpossibleObservation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace saclab

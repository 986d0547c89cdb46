#pragma once

#include <stdexcept>
#include <string>

namespace dpmv3 {

// Argument outside the domain of a schedule or model (t, lambda).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed call: dimension mismatch, empty input, inverted interval.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Repeated abscissae in a derivative-estimation system.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Adaptive integration could not make progress.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed table/model/schedule file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public ParseError {
public:
    using ParseError::ParseError;
};

} // namespace dpmv3

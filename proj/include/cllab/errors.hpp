#pragma once

#include <stdexcept>
#include <string>

namespace cllab {

// Argument outside the mathematical domain of an operation (non-finite, negative, empty grid).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Input function violates quasi-concavity or is otherwise unusable.
class InvalidFunctionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Iterative solver failed; the message carries the last bracket.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Domination or feasibility precondition failed; the message names the coordinate.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, std::size_t coordinate)
        : std::runtime_error(what), coordinate_(coordinate) {}
    std::size_t coordinate() const { return coordinate_; }

private:
    std::size_t coordinate_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnsupportedError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Descriptor text could not be parsed; position is a 0-based character offset.
class ParseError : public std::invalid_argument {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::invalid_argument(what + " (at position " + std::to_string(position) + ")"),
          position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

}  // namespace cllab

#pragma once

#include <stdexcept>
#include <string>

namespace pvrp {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (carries 1-based line number when known).
struct ParseError : Error {
    ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_number(line) {}
    long line_number;
};

// Structurally valid input that violates a domain invariant.
struct ValidationError : Error {
    using Error::Error;
};

// Instance generation could not satisfy feasibility within its retry budget.
struct GenerationError : Error {
    using Error::Error;
};

// An operation was called outside its contract (e.g. on a finished episode).
struct ContractError : Error {
    using Error::Error;
};

// Tensor shape / configuration mismatch.
struct DimensionError : Error {
    using Error::Error;
};

// Episode exceeded its step budget.
struct RunawayError : Error {
    using Error::Error;
};

// Exact solver refused an instance above its size guard.
struct SolveRefusedError : Error {
    using Error::Error;
};

// Checkpoint / config could not be loaded into the requested shapes.
struct LoadError : Error {
    using Error::Error;
};

}  // namespace pvrp

#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (dimensions, ranges, impossible setups).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input data (bad magic numbers, inconsistent headers).
struct FormatError : Error {
    using Error::Error;
};

// Filesystem / stream failures.
struct IoError : Error {
    using Error::Error;
};

// Invalid runtime input (labels out of range, empty rounds).
struct InputError : Error {
    using Error::Error;
};

// Non-finite values encountered mid-computation.
struct NumericError : Error {
    using Error::Error;
};

// A library-internal contract was violated.
struct InvariantError : Error {
    using Error::Error;
};

// An aggregation round violated the protocol (e.g. no updates).
struct ProtocolError : Error {
    using Error::Error;
};

}  // namespace fedsim

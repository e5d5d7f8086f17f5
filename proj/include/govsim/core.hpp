#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace govsim {

// Scalar aliases. All operation counts and rates are doubles: the quantities
// of interest (up to ~1e26 OP) do not fit in any integer type, and exactness
// requirements are defined in terms of identical IEEE summation order.
using Seconds = double;
using Ops = double;
using OpsPerSec = double;
using Watts = double;
using Bytes = double;
using BitsPerSec = double;
using Fraction = double;

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid input or broken type invariant (bad config, malformed file, ...).
struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(what) {}
};

// A requested computation cannot run on the given data
// (e.g. an estimation method needs a telemetry attribute the trace lacks).
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace govsim

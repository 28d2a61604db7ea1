#pragma once

#include <stdexcept>
#include <string>

namespace rsasim {

/// Invalid experiment or norm-file configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A score is undefined for this sample (constant RDM, constant row, zero-weight
/// features). Harness code records the replication as degenerate instead of aborting.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed (non-PD matrix, rank deficiency, optimizer stall).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rsasim

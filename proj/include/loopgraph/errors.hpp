#pragma once

#include <stdexcept>
#include <string>

namespace loopgraph {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File or database I/O failure (distinct from not-found results).
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or malformed input file.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Internal state violated an invariant; the run cannot be trusted past this point.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

} // namespace loopgraph

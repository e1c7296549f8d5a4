#pragma once

#include <stdexcept>
#include <string>

namespace selfcorr {

/// Bad experiment configuration or CLI arguments. CLI maps this to exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or unresolvable dataset content.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Chat backend failure (transport, endpoint refusal, template drift).
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& what, int attempts = 1)
        : std::runtime_error(what), attempts_(attempts) {}

    /// How many attempts were made before giving up.
    int attempts() const { return attempts_; }

private:
    int attempts_;
};

/// A metric was requested over a set that leaves it undefined (e.g. empty).
class MetricError : public std::runtime_error {
public:
    explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace selfcorr

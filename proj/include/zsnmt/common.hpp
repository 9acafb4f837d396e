#ifndef ZSNMT_COMMON_HPP
#define ZSNMT_COMMON_HPP

#include <stdexcept>
#include <string>

namespace zsnmt {

// Bad user-supplied configuration (wrong language set, invalid ranges, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data (out-of-vocabulary token, empty input, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariant; indicates a bug, not a user error.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace zsnmt

#endif

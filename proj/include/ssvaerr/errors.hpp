#pragma once

#include <stdexcept>
#include <string>

namespace ssvaerr {

// Violated precondition or shape contract. Indicates a caller bug, not bad data.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Invalid configuration value (bad range, unknown key, malformed file).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Metric undefined: both series constant with equal means.
class DegenerateSignal : public std::runtime_error {
public:
    explicit DegenerateSignal(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint does not match the receiving architecture.
class CheckpointMismatch : public std::runtime_error {
public:
    explicit CheckpointMismatch(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

} // namespace ssvaerr

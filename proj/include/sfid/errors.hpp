#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sfid {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

// Cholesky of the Gram matrix failed (duplicate points with zero jitter).
class IllConditionedGram : public Error {
public:
    using Error::Error;
};

// Non-finite state during a rollout; `step()` is the failing time index.
class TrajectoryDiverged : public Error {
public:
    TrajectoryDiverged(long step, const std::string& what)
        : Error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

class IntegrationDiverged : public Error {
public:
    using Error::Error;
};

// The model lacks something an operation needs (e.g. Jacobians).
class CapabilityError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(long line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

// Config validation; carries every violation found, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

}  // namespace sfid

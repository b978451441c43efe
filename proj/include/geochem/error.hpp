#pragma once

#include <stdexcept>
#include <string>

namespace geochem {

/// Process exit codes used by the CLI.
enum class ExitCode : int {
    Ok = 0,
    Config = 1,
    Data = 2,
    Numeric = 3,
};

/// Base of every library error. The exit code tells the CLI how to report it.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad configuration or invalid arguments.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::Config, what) {}
};

/// Malformed or inconsistent input data (schema, rows, validation).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::Data, what) {}
};

/// Numerical failure: singular systems, diverging training, domain errors.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ExitCode::Numeric, what) {}
};

}  // namespace geochem

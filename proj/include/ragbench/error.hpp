#pragma once

#include <stdexcept>
#include <string>

namespace ragbench {

/// Process exit codes used by the CLI.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    provider = 2,
    data = 3,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept = 0;
};

/// Bad arguments, bad configuration, or a violated precondition on parameters.
class UsageError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

/// Malformed or inconsistent input data (files, indexes, queries).
class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::data; }
};

/// A remote model endpoint failed. `status()` is the last HTTP status, 0 when
/// no response was received at all.
class ProviderError : public Error {
public:
    ProviderError(const std::string& what, int status) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }
    ExitCode exit_code() const noexcept override { return ExitCode::provider; }

private:
    int status_;
};

}  // namespace ragbench

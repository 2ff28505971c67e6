#pragma once

#include <stdexcept>
#include <string>

namespace calib {

/// Broad error category; the CLI maps these onto exit codes 1 and 2.
enum class ErrorKind
{
    input,        // malformed files, invalid parameters, bad configuration
    precondition  // estimator preconditions and numerical failures
};

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, std::string const& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] auto kind() const noexcept -> ErrorKind { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_input(std::string const& what) { throw Error(ErrorKind::input, what); }

[[noreturn]] inline void fail_precondition(std::string const& what)
{
    throw Error(ErrorKind::precondition, what);
}

}  // namespace calib

#pragma once

#include <stdexcept>
#include <string>

namespace lalr {

// Base for every error raised by the library. The subclasses map one-to-one
// onto the CLI exit codes (see tools/lalr_cli.cpp).
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Matrix or dataset dimensions do not line up.
class ShapeError : public Error
{
public:
    using Error::Error;
};

// Invalid parameter or configuration value (bad tau, negative learning rate,
// unknown config key, ...).
class ConfigError : public Error
{
public:
    using Error::Error;
};

// Malformed or missing input data.
class DataError : public Error
{
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error
{
public:
    DivergenceError(const std::string& what, std::size_t epoch, double lr)
        : Error(what), epoch_(epoch), lr_(lr)
    {
    }

    std::size_t epoch() const noexcept { return epoch_; }
    double lr() const noexcept { return lr_; }

private:
    std::size_t epoch_;
    double lr_;
};

// Filesystem failure; the message always carries the offending path.
class IoError : public Error
{
public:
    using Error::Error;
};

// A Lipschitz constant was requested for a loss without a closed form.
class UnsupportedLoss : public Error
{
public:
    using Error::Error;
};

}  // namespace lalr

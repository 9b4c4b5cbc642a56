#pragma once

#include <stdexcept>
#include <string>

namespace gms {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Raised when an operation is called in the wrong lifecycle state
/// (e.g. backward() without a preceding training forward pass).
class StateError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during training.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::string parameter)
        : Error(what), parameter_(std::move(parameter)) {}

    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::string path)
        : Error(what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Malformed checkpoint; section() names the part of the file that failed.
class CheckpointError : public Error {
public:
    CheckpointError(std::string section, const std::string& what)
        : Error("checkpoint " + section + ": " + what), section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

}  // namespace gms

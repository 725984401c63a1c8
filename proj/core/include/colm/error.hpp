#pragma once

#include <stdexcept>
#include <string>

namespace colm {

/// Base class of every exception thrown by the library. The `code()` is a
/// stable, machine-readable tag (e.g. "codec.corrupt_magic"); the CLI maps
/// these onto exit codes.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Malformed or unreadable input (files, configs, arguments).
class InputError : public Error {
public:
    using Error::Error;
};

/// A solver could not produce an answer (no correspondences, degenerate
/// geometry, no RANSAC model).
class NoSolutionError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, int last_finite_epoch)
        : Error("train.divergence", message), last_finite_epoch_(last_finite_epoch) {}

    int last_finite_epoch() const noexcept { return last_finite_epoch_; }

private:
    int last_finite_epoch_;
};

}  // namespace colm

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fas {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shape, non-finite entry, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A constraint whose weights cannot be normalised (component sum ~ 0).
class DegenerateConstraint : public Error {
public:
    DegenerateConstraint(std::size_t expert, const std::string& what)
        : Error("expert " + std::to_string(expert) + ": " + what), expert_(expert) {}

    std::size_t expert() const noexcept { return expert_; }

private:
    std::size_t expert_;
};

/// Training produced a non-finite objective or parameter.
class Divergence : public Error {
public:
    Divergence(std::size_t update, const std::string& what)
        : Error("diverged at update " + std::to_string(update) + ": " + what), update_(update) {}

    std::size_t update() const noexcept { return update_; }

private:
    std::size_t update_;
};

/// Requested enumeration exceeds the brute-force guard.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. offset is the byte position of the problem.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// An internal invariant failed; indicates a bug rather than bad input.
class InvariantFailure : public Error {
public:
    using Error::Error;
};

}  // namespace fas

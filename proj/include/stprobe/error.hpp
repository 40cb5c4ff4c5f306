#pragma once

#include <stdexcept>
#include <string>

namespace stprobe {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller passed arguments that violate a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Raised when a filter never produced a positive activation over a grid.
class InactiveFilter : public Error {
public:
    explicit InactiveFilter(std::size_t filter_id)
        : Error("inactive filter " + std::to_string(filter_id) + ": no positive activation on the grid"),
          filter_id_(filter_id) {}

    std::size_t filter_id() const { return filter_id_; }

private:
    std::size_t filter_id_;
};

/// A response table lacks rows that an operation needs.
class IncompleteTable : public Error {
public:
    using Error::Error;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

}  // namespace stprobe

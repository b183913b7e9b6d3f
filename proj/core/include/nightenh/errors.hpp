#pragma once

#include <stdexcept>
#include <string>

namespace nightenh {

// Unreadable or unwritable files, malformed weight archives.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched tensor/image extents or invalid argument combinations.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values or violated numeric preconditions (lr > 0, sigma > 0, ...).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nightenh

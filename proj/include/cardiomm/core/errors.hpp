#pragma once

#include <stdexcept>
#include <string>

namespace cardiomm {

// Error classes map onto CLI exit codes: validation 2, I/O 3, numerical 4.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace cardiomm

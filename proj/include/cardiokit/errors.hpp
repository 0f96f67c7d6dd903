#pragma once

#include <stdexcept>
#include <string>

namespace cardiokit {

// Error taxonomy. The CLI maps config_error to exit code 2 and
// data_error (with its subclasses) to exit code 3.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file content (bad CSV cell, ragged row, unreadable JSON).
class parse_error : public data_error {
public:
    using data_error::data_error;
};

// Filesystem-level failure (missing file, unwritable path).
class io_error : public data_error {
public:
    using data_error::data_error;
};

} // namespace cardiokit

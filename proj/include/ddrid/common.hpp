#pragma once

#include <stdexcept>
#include <string>

namespace ddrid {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Every failure surfaced by the library derives from Error so
// the CLI can print one structured diagnostic line and exit nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error("format", m) {}
};
struct ConsistencyError : Error {
    explicit ConsistencyError(const std::string& m) : Error("consistency", m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& m) : Error("argument", m) {}
};
struct StateError : Error {
    explicit StateError(const std::string& m) : Error("state", m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& m) : Error("degenerate-input", m) {}
};

}  // namespace ddrid

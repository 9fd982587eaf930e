#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace refsplat {

/// Out-of-range argument to a math routine (SH degree, order, etc).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite or otherwise unusable numeric input.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched buffers, cameras or settings.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A backward call that does not match the forward call that produced its trace.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed binary/text container. Carries the byte offset of the failure.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Checkpoint with the wrong version or missing properties.
class SchemaError : public std::runtime_error {
public:
    SchemaError(const std::string& what, std::vector<std::string> missing = {})
        : std::runtime_error(what), missing_(std::move(missing)) {}
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

/// Dataset or file could not be loaded.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptySceneError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace refsplat

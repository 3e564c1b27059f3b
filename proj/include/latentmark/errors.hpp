#pragma once

#include <stdexcept>
#include <string>

namespace latentmark {

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error("shape mismatch: " + msg) {}
};

struct BadChannel : std::runtime_error {
    explicit BadChannel(const std::string& msg) : std::runtime_error("bad channel: " + msg) {}
};

struct BadIntensity : std::runtime_error {
    explicit BadIntensity(const std::string& msg) : std::runtime_error("bad intensity: " + msg) {}
};

struct UnsupportedCharacter : std::runtime_error {
    explicit UnsupportedCharacter(const std::string& msg)
        : std::runtime_error("unsupported character: " + msg) {}
};

struct CapacityExceeded : std::runtime_error {
    explicit CapacityExceeded(const std::string& msg)
        : std::runtime_error("capacity exceeded: " + msg) {}
};

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& msg) : std::runtime_error("empty input: " + msg) {}
};

struct SampleTooSmall : std::runtime_error {
    explicit SampleTooSmall(const std::string& msg) : std::runtime_error("sample too small: " + msg) {}
};

struct BackendUnavailable : std::runtime_error {
    explicit BackendUnavailable(const std::string& msg)
        : std::runtime_error("backend unavailable: " + msg) {}
};

struct GeometryMismatch : std::runtime_error {
    explicit GeometryMismatch(const std::string& msg)
        : std::runtime_error("geometry mismatch: " + msg) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& key, const std::string& msg)
        : std::runtime_error("config error at '" + key + "': " + msg), key_path(key) {}
    std::string key_path;
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct NonFiniteLoss : std::runtime_error {
    NonFiniteLoss(long step, const std::string& msg)
        : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + msg),
          step_index(step) {}
    long step_index;
};

struct ImageTooSmall : std::runtime_error {
    explicit ImageTooSmall(const std::string& msg) : std::runtime_error("image too small: " + msg) {}
};

} // namespace latentmark

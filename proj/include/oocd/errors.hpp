#pragma once

#include <stdexcept>
#include <string>

namespace oocd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A model/teacher response in which no verdict could be detected.
struct ParseFailure : std::runtime_error {
    explicit ParseFailure(std::string raw)
        : std::runtime_error("no verdict found in response"), raw_text(std::move(raw)) {}
    std::string raw_text;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    ProtocolError(int status_code, const std::string& msg)
        : std::runtime_error(msg), status(status_code) {}
    int status;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace oocd

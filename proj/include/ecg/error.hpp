#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecg {

enum class ErrorKind {
    MissingFile,
    SchemaMismatch,
    BadSignalShape,
    BadFold,
    InvalidProbability,
    EmptyClass,
    EmptyTrainingSet,
    LeadCountMismatch,
    ZeroClassCount,
    InvalidConfig,
    ShapeMismatch,
    StaleCache,
    IoFailure,
    CorruptCheckpoint,
    NonFiniteInput,
    NonFiniteLoss,
    CheckpointMismatch,
    MalformedInput,
};

std::string_view kind_name(ErrorKind kind);

// Process exit code used by the command-line tool for each error kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace ecg

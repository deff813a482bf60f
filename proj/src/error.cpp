#include "ecg/error.hpp"

namespace ecg {

std::string_view kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MissingFile: return "MissingFile";
        case ErrorKind::SchemaMismatch: return "SchemaMismatch";
        case ErrorKind::BadSignalShape: return "BadSignalShape";
        case ErrorKind::BadFold: return "BadFold";
        case ErrorKind::InvalidProbability: return "InvalidProbability";
        case ErrorKind::EmptyClass: return "EmptyClass";
        case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorKind::LeadCountMismatch: return "LeadCountMismatch";
        case ErrorKind::ZeroClassCount: return "ZeroClassCount";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::StaleCache: return "StaleCache";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorKind::NonFiniteInput: return "NonFiniteInput";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorKind::MalformedInput: return "MalformedInput";
    }
    return "Unknown";
}

int exit_code(ErrorKind kind) {
    // 1 is reserved for usage errors reported by the argument parser.
    return 10 + static_cast<int>(kind);
}

}  // namespace ecg

#ifndef ESGLM_ERROR_HPP
#define ESGLM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace esglm {

enum class ErrorKind {
    InvalidInput,
    InvalidConfig,
    InvalidId,
    ShapeError,
    NumericError,
    EmptyBatch,
    EmptyDocument,
    ParseError,
    DuplicateError,
    InsufficientHistory,
    EmptyDataset,
    StratificationError,
    EmptySplit,
    CheckpointMismatch,
    NotACheckpoint,
    UnsupportedVersion,
    CorruptCheckpoint,
    IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// CLI exit codes: 1 usage/config, 2 data, 3 numeric.
int exit_code_for(ErrorKind kind);

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidId: return "InvalidId";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::NumericError: return "NumericError";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateError: return "DuplicateError";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::StratificationError: return "StratificationError";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::NotACheckpoint: return "NotACheckpoint";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::CheckpointMismatch:
        return 1;
    case ErrorKind::NumericError:
        return 3;
    default:
        return 2;
    }
}

} // namespace esglm

#endif // ESGLM_ERROR_HPP

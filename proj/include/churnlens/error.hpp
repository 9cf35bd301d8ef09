#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace churnlens {

/// Every failure the library reports carries one of these codes. The CLI maps
/// them onto process exit codes through `exit_code_for`.
enum class ErrorCode {
    // snapshots
    MalformedHeader,
    MalformedId,
    EmptyFile,
    AccountMismatch,
    NonIncreasingTimestamps,
    // churn
    EmptyUnfollowers,
    InsufficientSnapshots,
    BoundaryOutOfRange,
    // weaklabel
    AmbiguousName,
    EmptyClass,
    // imageprep
    NoFace,
    InvalidBox,
    InvalidImage,
    DecodeFailure,
    MalformedManifest,
    // cnn
    ShapeMismatch,
    NonFiniteLoss,
    InvalidConfig,
    VersionMismatch,
    ChecksumMismatch,
    TruncatedFile,
    BadMagic,
    // stats
    DegeneratePool,
    InvalidSample,
    NonFiniteInput,
    // pipeline
    EmptyCohort,
    MalformedConfig,
    MalformedReport,
    // general
    Io,
    Internal,
};

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MalformedId: return "MalformedId";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::AccountMismatch: return "AccountMismatch";
    case ErrorCode::NonIncreasingTimestamps: return "NonIncreasingTimestamps";
    case ErrorCode::EmptyUnfollowers: return "EmptyUnfollowers";
    case ErrorCode::InsufficientSnapshots: return "InsufficientSnapshots";
    case ErrorCode::BoundaryOutOfRange: return "BoundaryOutOfRange";
    case ErrorCode::AmbiguousName: return "AmbiguousName";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NoFace: return "NoFace";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DegeneratePool: return "DegeneratePool";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::MalformedConfig: return "MalformedConfig";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Internal: return "Internal";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::size_t line = 0)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), line_(line) {}

    ErrorCode code() const noexcept { return code_; }

    /// 1-based source line for parse errors, 0 when not applicable.
    std::size_t line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::size_t line_;
};

/// CLI exit status: 2 for bad data, 3 for broken internal invariants.
inline int exit_code_for(ErrorCode code) noexcept {
    return code == ErrorCode::Internal ? 3 : 2;
}

}  // namespace churnlens

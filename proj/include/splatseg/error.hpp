// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_ERROR_HPP
#define SPLATSEG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace splatseg {

/// Failure categories. Every error raised by the library carries one of
/// these so callers (and the CLI) can map failures to exit codes without
/// string matching.
enum class ErrorKind {
    // I/O and file formats
    IoFailure,
    MalformedHeader,
    CountMismatch,
    CheckpointVersionMismatch,
    // validation
    InvariantViolation,
    DimensionMismatch,
    ShapeMismatch,
    LengthMismatch,
    IndexOutOfRange,
    // empty inputs
    EmptyScene,
    EmptyCloud,
    EmptySpec,
    EmptyManifest,
    EmptySplit,
    // missing optional data
    MissingSemantics,
    MissingLabels,
    ContribNotRetained,
    NoValidTargets,
    // configuration
    NonPositiveVoxelSize,
    UnknownMode,
    UsageError,
    // autodiff
    NonScalarLoss,
    GraphConsumed,
    AssignOutOfRange,
    // numerics
    NonFinite,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message)
        , mKind(kind)
    {
    }

    ErrorKind kind() const noexcept { return mKind; }

private:
    ErrorKind mKind;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::MalformedHeader: return "MalformedHeader";
        case ErrorKind::CountMismatch: return "CountMismatch";
        case ErrorKind::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
        case ErrorKind::InvariantViolation: return "InvariantViolation";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::EmptyScene: return "EmptyScene";
        case ErrorKind::EmptyCloud: return "EmptyCloud";
        case ErrorKind::EmptySpec: return "EmptySpec";
        case ErrorKind::EmptyManifest: return "EmptyManifest";
        case ErrorKind::EmptySplit: return "EmptySplit";
        case ErrorKind::MissingSemantics: return "MissingSemantics";
        case ErrorKind::MissingLabels: return "MissingLabels";
        case ErrorKind::ContribNotRetained: return "ContribNotRetained";
        case ErrorKind::NoValidTargets: return "NoValidTargets";
        case ErrorKind::NonPositiveVoxelSize: return "NonPositiveVoxelSize";
        case ErrorKind::UnknownMode: return "UnknownMode";
        case ErrorKind::UsageError: return "UsageError";
        case ErrorKind::NonScalarLoss: return "NonScalarLoss";
        case ErrorKind::GraphConsumed: return "GraphConsumed";
        case ErrorKind::AssignOutOfRange: return "AssignOutOfRange";
        case ErrorKind::NonFinite: return "NonFinite";
    }
    return "UnknownError";
}

} // namespace splatseg

#endif // SPLATSEG_ERROR_HPP

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cxreval {

enum class ErrorKind {
    // corpus
    MissingField,
    DuplicateId,
    MalformedLine,
    UnknownColumn,
    DuplicateColumn,
    BadCell,
    Io,
    // normalizer / labeler
    EmptyReport,
    InvalidLexicon,
    TransportError,
    BadStatus,
    SchemaError,
    // metrics
    EmptyInput,
    LengthMismatch,
    NothingToAverage,
    AllResamplesUndefined,
    DomainError,
    AlignmentError,
    InvalidConfig,
    // study
    InsufficientRecords,
    UnknownRater,
    PositionOutOfRange,
    BadGrade,
    StorageError,
    EmptyRatings,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::DuplicateColumn: return "DuplicateColumn";
    case ErrorKind::BadCell: return "BadCell";
    case ErrorKind::Io: return "Io";
    case ErrorKind::EmptyReport: return "EmptyReport";
    case ErrorKind::InvalidLexicon: return "InvalidLexicon";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::BadStatus: return "BadStatus";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NothingToAverage: return "NothingToAverage";
    case ErrorKind::AllResamplesUndefined: return "AllResamplesUndefined";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InsufficientRecords: return "InsufficientRecords";
    case ErrorKind::UnknownRater: return "UnknownRater";
    case ErrorKind::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorKind::BadGrade: return "BadGrade";
    case ErrorKind::StorageError: return "StorageError";
    case ErrorKind::EmptyRatings: return "EmptyRatings";
    }
    return "Unknown";
}

/// Where in an input file an error was detected. All fields are optional;
/// `line` is 1-based, `byte_offset` is the offset of the line start.
struct SourceLocation {
    std::string path;
    std::optional<std::size_t> line;
    std::optional<std::size_t> byte_offset;
    std::optional<std::string> column;
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, SourceLocation where = {})
        : std::runtime_error(format(kind, message, where)), kind_(kind),
          where_(std::move(where)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const SourceLocation& where() const noexcept { return where_; }

private:
    static std::string format(ErrorKind kind, const std::string& message,
                              const SourceLocation& where) {
        std::string out(to_string(kind));
        out += ": ";
        if (!where.path.empty()) {
            out += where.path;
            if (where.line) out += ":" + std::to_string(*where.line);
            out += ": ";
        } else if (where.line) {
            out += "line " + std::to_string(*where.line) + ": ";
        }
        out += message;
        if (where.byte_offset) out += " (byte offset " + std::to_string(*where.byte_offset) + ")";
        if (where.column) out += " (column '" + *where.column + "')";
        return out;
    }

    ErrorKind kind_;
    SourceLocation where_;
};

} // namespace cxreval

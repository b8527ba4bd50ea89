#pragma once

#include <stdexcept>
#include <string>

namespace nlaslr {

enum class ErrorKind {
    Parse,             // malformed input file or document
    Config,            // invalid configuration value or combination
    Shape,             // tensor extents do not line up
    DuplicateToken,
    DegenerateEmbedding,
    InvalidVocabulary,
    InvalidTemperature,
    Parameter,         // out-of-range scalar parameter
    EmptySequence,
    Spec,              // infeasible synthetic-data spec
    Length,            // clip longer than raw sample
    Crop,
    Data,              // missing or inconsistent data on disk
    Numerical,         // non-finite loss or similar
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::DuplicateToken: return "duplicate-token error";
        case ErrorKind::DegenerateEmbedding: return "degenerate-embedding error";
        case ErrorKind::InvalidVocabulary: return "invalid-vocabulary error";
        case ErrorKind::InvalidTemperature: return "invalid-temperature error";
        case ErrorKind::Parameter: return "parameter error";
        case ErrorKind::EmptySequence: return "empty-sequence error";
        case ErrorKind::Spec: return "spec error";
        case ErrorKind::Length: return "length error";
        case ErrorKind::Crop: return "crop error";
        case ErrorKind::Data: return "data error";
        case ErrorKind::Numerical: return "numerical error";
    }
    return "error";
}

/// Process exit code used by the command-line tool for each error family.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Data:
        case ErrorKind::Length:
        case ErrorKind::EmptySequence:
            return 3;
        case ErrorKind::Numerical:
            return 4;
        default:
            return 2;
    }
}

class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

}  // namespace nlaslr

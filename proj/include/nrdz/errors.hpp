#pragma once

#include <stdexcept>
#include <string>

namespace nrdz {

enum class Err {
    NonIntegralSpacing,
    InvalidLayout,
    DegenerateGeometry,
    TooClose,
    DuplicateSample,
    FactorizationFailure,
    InsufficientPairs,
    NoPositiveCorrelation,
    SingularSystem,
    GridMismatch,
    EmptyInput,
    MissingPrediction,
    BadGeometry,
    NegativeHeight,
    ConfigError,
    IoError,
};

const char* to_string(Err code);

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Err code() const { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& message) { throw Error(code, message); }

inline const char* to_string(Err code) {
    switch (code) {
        case Err::NonIntegralSpacing: return "NonIntegralSpacing";
        case Err::InvalidLayout: return "InvalidLayout";
        case Err::DegenerateGeometry: return "DegenerateGeometry";
        case Err::TooClose: return "TooClose";
        case Err::DuplicateSample: return "DuplicateSample";
        case Err::FactorizationFailure: return "FactorizationFailure";
        case Err::InsufficientPairs: return "InsufficientPairs";
        case Err::NoPositiveCorrelation: return "NoPositiveCorrelation";
        case Err::SingularSystem: return "SingularSystem";
        case Err::GridMismatch: return "GridMismatch";
        case Err::EmptyInput: return "EmptyInput";
        case Err::MissingPrediction: return "MissingPrediction";
        case Err::BadGeometry: return "BadGeometry";
        case Err::NegativeHeight: return "NegativeHeight";
        case Err::ConfigError: return "ConfigError";
        case Err::IoError: return "IoError";
    }
    return "UnknownError";
}

} // namespace nrdz

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capev {

enum class ErrorCode {
    // audio_io
    MalformedWav,
    UnsupportedEncoding,
    EmptyClip,
    EmptyCollection,
    MixedSampleRates,
    // acoustic_features
    NoVoicedFrames,
    TooFewPeriods,
    ZeroMeanAmplitude,
    FeatureExtractionFailed,
    // augmentation
    BadLength,
    RateMismatch,
    MissingBabbleFile,
    // classical regressors
    TooFewRows,
    EmptyData,
    UntrainedModel,
    InvalidHyperparameter,
    // neural heads
    BadFormat,
    ShapeMismatch,
    Diverged,
    // evaluation
    TooFewSamples,
    LengthMismatch,
    Empty,
    ConstantInput,
    IoError,
    // pipeline
    ManifestInvalid,
    ConfigInvalid,
    ModelFormat,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedWav: return "MalformedWav";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::EmptyCollection: return "EmptyCollection";
    case ErrorCode::MixedSampleRates: return "MixedSampleRates";
    case ErrorCode::NoVoicedFrames: return "NoVoicedFrames";
    case ErrorCode::TooFewPeriods: return "TooFewPeriods";
    case ErrorCode::ZeroMeanAmplitude: return "ZeroMeanAmplitude";
    case ErrorCode::FeatureExtractionFailed: return "FeatureExtractionFailed";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::MissingBabbleFile: return "MissingBabbleFile";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ModelFormat: return "ModelFormat";
    }
    return "Unknown";
}

/// Validation errors are the caller's fault (bad input files, bad
/// configuration); the CLI maps them to exit code 1, everything else to 2.
constexpr bool is_validation_error(ErrorCode code) {
    return code == ErrorCode::ManifestInvalid || code == ErrorCode::ConfigInvalid;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace capev

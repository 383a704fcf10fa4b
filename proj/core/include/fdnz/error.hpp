#pragma once

#include <stdexcept>
#include <string>

namespace fdnz {

// Every failure mode the library can report. Tests match on the kind, the
// message carries the specifics (file, offset, tensor name, ...).
enum class ErrorKind {
    // dataset ingestion
    MagicMismatch,
    CountMismatch,
    TruncatedFile,
    LabelOutOfRange,
    InsufficientClassSamples,
    // tensor / network engine
    ShapeMismatch,
    StaleCache,
    EmptyDataset,
    // checkpoint container
    BadMagic,
    UnsupportedVersion,
    TensorShapeCorrupt,
    // factorization
    NegativeInput,
    RankTooLarge,
    // hybrid features
    NoFeatureLayer,
    TooFewSamples,
    DimMismatch,
    RowMismatch,
    // diffusion
    BadRange,
    StepOutOfRange,
    // attacks
    TooFewClasses,
    // metrics
    EmptyMatrix,
    DegenerateLabels,
    // configuration and harness
    ParseError,
    UnknownKey,
    InvalidValue,
    MissingArtifact,
    StaleArtifacts,
    IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Config and user-input problems exit with 1, everything else with 2.
    bool is_validation() const noexcept {
        return kind_ == ErrorKind::ParseError || kind_ == ErrorKind::UnknownKey ||
               kind_ == ErrorKind::InvalidValue;
    }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace fdnz

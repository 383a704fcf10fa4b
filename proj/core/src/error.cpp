#include "fdnz/error.hpp"

namespace fdnz {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MagicMismatch: return "MagicMismatch";
        case ErrorKind::CountMismatch: return "CountMismatch";
        case ErrorKind::TruncatedFile: return "TruncatedFile";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::InsufficientClassSamples: return "InsufficientClassSamples";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::StaleCache: return "StaleCache";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorKind::TensorShapeCorrupt: return "TensorShapeCorrupt";
        case ErrorKind::NegativeInput: return "NegativeInput";
        case ErrorKind::RankTooLarge: return "RankTooLarge";
        case ErrorKind::NoFeatureLayer: return "NoFeatureLayer";
        case ErrorKind::TooFewSamples: return "TooFewSamples";
        case ErrorKind::DimMismatch: return "DimMismatch";
        case ErrorKind::RowMismatch: return "RowMismatch";
        case ErrorKind::BadRange: return "BadRange";
        case ErrorKind::StepOutOfRange: return "StepOutOfRange";
        case ErrorKind::TooFewClasses: return "TooFewClasses";
        case ErrorKind::EmptyMatrix: return "EmptyMatrix";
        case ErrorKind::DegenerateLabels: return "DegenerateLabels";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::UnknownKey: return "UnknownKey";
        case ErrorKind::InvalidValue: return "InvalidValue";
        case ErrorKind::MissingArtifact: return "MissingArtifact";
        case ErrorKind::StaleArtifacts: return "StaleArtifacts";
        case ErrorKind::IoError: return "IoError";
    }
    return "Error";
}

} // namespace fdnz

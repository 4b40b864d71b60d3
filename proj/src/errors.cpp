#include "guidebench/errors.hpp"

namespace guidebench {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidQuestion: return "InvalidQuestion";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::EndpointUnreachable: return "EndpointUnreachable";
        case ErrorKind::MalformedResponse: return "MalformedResponse";
        case ErrorKind::RequestRejected: return "RequestRejected";
        case ErrorKind::ScriptMiss: return "ScriptMiss";
        case ErrorKind::InvalidModelSpec: return "InvalidModelSpec";
        case ErrorKind::TemplateError: return "TemplateError";
        case ErrorKind::DialogueFailed: return "DialogueFailed";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::TurnOutOfRange: return "TurnOutOfRange";
        case ErrorKind::MismatchedGrids: return "MismatchedGrids";
        case ErrorKind::MissingMove: return "MissingMove";
        case ErrorKind::EmptyNormalizer: return "EmptyNormalizer";
        case ErrorKind::UndefinedJaPrime: return "UndefinedJaPrime";
        case ErrorKind::MismatchedIds: return "MismatchedIds";
        case ErrorKind::MissingDifficulty: return "MissingDifficulty";
        case ErrorKind::MalformedRewrite: return "MalformedRewrite";
        case ErrorKind::DuplicateUnit: return "DuplicateUnit";
        case ErrorKind::StorageFailure: return "StorageFailure";
        case ErrorKind::ManifestCorrupt: return "ManifestCorrupt";
        case ErrorKind::IncompleteRun: return "IncompleteRun";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace guidebench

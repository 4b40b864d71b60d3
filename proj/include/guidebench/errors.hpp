#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace guidebench {

enum class ErrorKind {
    // domain / io
    InvalidQuestion,
    ParseError,
    // model_gateway
    EndpointUnreachable,
    MalformedResponse,
    RequestRejected,
    ScriptMiss,
    InvalidModelSpec,
    // dialogue_engine
    TemplateError,
    DialogueFailed,
    // metrics / analysis
    EmptyDataset,
    TurnOutOfRange,
    MismatchedGrids,
    MissingMove,
    EmptyNormalizer,
    UndefinedJaPrime,
    MismatchedIds,
    MissingDifficulty,
    // dataset_forge
    MalformedRewrite,
    // store
    DuplicateUnit,
    StorageFailure,
    ManifestCorrupt,
    IncompleteRun,
    // cli
    ConfigError,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace guidebench

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace secnn {

enum class ErrorKind {
    ShapeMismatch,
    DtypeMismatch,
    InvalidAxis,
    DetachedLoss,
    NondeterministicFunction,
    InvalidConfig,
    SpatialTooSmall,
    UnsupportedModel,
    MissingGrad,
    LabelOutOfRange,
    EmptyInput,
    SingleClassInput,
    NoPositives,
    NoClasses,
    EmptyClass,
    UndecodableImage,
    EmptySplit,
    IoFailure,
    DivergedLoss,
    ClassMismatch,
    CorruptCheckpoint,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the engine; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace secnn

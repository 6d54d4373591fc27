#include "secnn/error.hpp"

namespace secnn {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DtypeMismatch: return "DtypeMismatch";
        case ErrorKind::InvalidAxis: return "InvalidAxis";
        case ErrorKind::DetachedLoss: return "DetachedLoss";
        case ErrorKind::NondeterministicFunction: return "NondeterministicFunction";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::SpatialTooSmall: return "SpatialTooSmall";
        case ErrorKind::UnsupportedModel: return "UnsupportedModel";
        case ErrorKind::MissingGrad: return "MissingGrad";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::SingleClassInput: return "SingleClassInput";
        case ErrorKind::NoPositives: return "NoPositives";
        case ErrorKind::NoClasses: return "NoClasses";
        case ErrorKind::EmptyClass: return "EmptyClass";
        case ErrorKind::UndecodableImage: return "UndecodableImage";
        case ErrorKind::EmptySplit: return "EmptySplit";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::DivergedLoss: return "DivergedLoss";
        case ErrorKind::ClassMismatch: return "ClassMismatch";
        case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace secnn

#include <localdeform/errors.hpp>

namespace localdeform {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::AllElementsDegenerate: return "AllElementsDegenerate";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonpositiveThreshold: return "NonpositiveThreshold";
    case ErrorCode::SafeguardViolated: return "SafeguardViolated";
    case ErrorCode::ZeroRestPatch: return "ZeroRestPatch";
    case ErrorCode::NonpositiveSigma: return "NonpositiveSigma";
    case ErrorCode::NonManifoldEdge: return "NonManifoldEdge";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::OverlappingConstraints: return "OverlappingConstraints";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message)
    , m_code(code)
{}

void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace localdeform

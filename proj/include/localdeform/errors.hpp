#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace localdeform {

enum class ErrorCode {
    EmptyMesh,
    IndexOutOfRange,
    AllElementsDegenerate,
    NonFinite,
    ShapeMismatch,
    NonpositiveThreshold,
    SafeguardViolated,
    ZeroRestPatch,
    NonpositiveSigma,
    NonManifoldEdge,
    SingularSystem,
    OverlappingConstraints,
    InvalidArgument,
    ParseError,
    UnsupportedFeature,
    SchemaError,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every module; `code()` identifies the failure class.
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

} // namespace localdeform

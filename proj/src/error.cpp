#include "distrace/error.hpp"

namespace distrace {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::UnsupportedMaxval: return "UnsupportedMaxval";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::ThresholdOrder: return "ThresholdOrder";
    case ErrorCode::ZeroIterations: return "ZeroIterations";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonPositiveCalibration: return "NonPositiveCalibration";
    case ErrorCode::NonPositiveThreshold: return "NonPositiveThreshold";
    case ErrorCode::MalformedAnnotation: return "MalformedAnnotation";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::MissingLabelMap: return "MissingLabelMap";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadThreshold: return "BadThreshold";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ManifestMissing: return "ManifestMissing";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
{
}

}  // namespace distrace

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace distrace {

enum class ErrorCode {
    // imgproc
    MalformedHeader,
    TruncatedData,
    UnsupportedMaxval,
    NonPositiveSigma,
    ThresholdOrder,
    ZeroIterations,
    InvalidArgument,
    // geometry
    EmptyInput,
    // distancing
    NonPositiveCalibration,
    NonPositiveThreshold,
    // detection
    MalformedAnnotation,
    UnknownClass,
    MissingLabelMap,
    DimensionMismatch,
    BadThreshold,
    LabelOutOfRange,
    // edge node
    ConfigInvalid,
    ManifestMissing,
    IoFailure,
    EndpointUnreachable,
    BindFailure,
    // bench
    MalformedRow,
    UnknownMetric,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the event stream) can report it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace distrace

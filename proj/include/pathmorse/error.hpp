#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathmorse {

enum class ErrorKind {
    DegenerateMetric,
    NonphysicalSystem,
    OutOfChart,
    IntegrationFailure,
    AntipodalEndpoints,
    NoConvergence,
    EndpointViolation,
    GridTooCoarse,
    ConjugateEndpoints,
    SegmentCountTooSmall,
    SegmentTooLong,
    StepUnderflow,
    Unclassified,
    BudgetExhausted,
    IndexGapNotOne,
    UnresolvedBasin,
    BoundaryNotSquareZero,
    Unsupported,
    ConfigInvalid,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::DegenerateMetric: return "DegenerateMetric";
        case ErrorKind::NonphysicalSystem: return "NonphysicalSystem";
        case ErrorKind::OutOfChart: return "OutOfChart";
        case ErrorKind::IntegrationFailure: return "IntegrationFailure";
        case ErrorKind::AntipodalEndpoints: return "AntipodalEndpoints";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::EndpointViolation: return "EndpointViolation";
        case ErrorKind::GridTooCoarse: return "GridTooCoarse";
        case ErrorKind::ConjugateEndpoints: return "ConjugateEndpoints";
        case ErrorKind::SegmentCountTooSmall: return "SegmentCountTooSmall";
        case ErrorKind::SegmentTooLong: return "SegmentTooLong";
        case ErrorKind::StepUnderflow: return "StepUnderflow";
        case ErrorKind::Unclassified: return "Unclassified";
        case ErrorKind::BudgetExhausted: return "BudgetExhausted";
        case ErrorKind::IndexGapNotOne: return "IndexGapNotOne";
        case ErrorKind::UnresolvedBasin: return "UnresolvedBasin";
        case ErrorKind::BoundaryNotSquareZero: return "BoundaryNotSquareZero";
        case ErrorKind::Unsupported: return "Unsupported";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace pathmorse

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atomql {

enum class ErrorKind {
    Io,
    Parse,
    Schema,
    MissingCell,
    NonPositiveTime,
    SpecMismatch,
    OutOfRange,
    ZeroLoad,
    MissingMetric,
    ConflictingRows,
    KernelMismatch,
    GpuMismatch,
    NoAtomicJobs,
    MissingO,
    InfeasibleScenario,
    Usage,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Schema: return "Schema";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::SpecMismatch: return "SpecMismatch";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::ZeroLoad: return "ZeroLoad";
    case ErrorKind::MissingMetric: return "MissingMetric";
    case ErrorKind::ConflictingRows: return "ConflictingRows";
    case ErrorKind::KernelMismatch: return "KernelMismatch";
    case ErrorKind::GpuMismatch: return "GpuMismatch";
    case ErrorKind::NoAtomicJobs: return "NoAtomicJobs";
    case ErrorKind::MissingO: return "MissingO";
    case ErrorKind::InfeasibleScenario: return "InfeasibleScenario";
    case ErrorKind::Usage: return "Usage";
    }
    return "Unknown";
}

// Every failure raised by the library carries a kind so callers (and the CLI
// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace atomql

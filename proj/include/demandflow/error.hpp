#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace demandflow {

enum class ErrorKind {
    stream,
    format,
    empty_dataset,
    duplicate,
    inconsistency,
    range,
    degenerate_weights,
    bandwidth,
    coverage,
    grid,
    split,
    empty_period,
    invalid_task,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::stream: return "stream";
    case ErrorKind::format: return "format";
    case ErrorKind::empty_dataset: return "empty_dataset";
    case ErrorKind::duplicate: return "duplicate";
    case ErrorKind::inconsistency: return "inconsistency";
    case ErrorKind::range: return "range";
    case ErrorKind::degenerate_weights: return "degenerate_weights";
    case ErrorKind::bandwidth: return "bandwidth";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::grid: return "grid";
    case ErrorKind::split: return "split";
    case ErrorKind::empty_period: return "empty_period";
    case ErrorKind::invalid_task: return "invalid_task";
    }
    return "unknown";
}

/// Every failure raised by the engine carries a kind so callers (the
/// service, the CLI) can map it to a status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace demandflow

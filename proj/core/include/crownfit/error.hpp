#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crownfit {

enum class ErrorKind {
    Argument,
    Parse,
    Validation,
    Io,
    Unsupported,
    Classification,
    CoarseFailure,
    RankDeficient,
    RoutingFailure,
    NoMatch,
    Degenerate,
    Mode,
    NonConvergence,
    Config,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. `stage` is filled in by the pipeline when an error
/// crosses a stage boundary ("classification", "registration", ...).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string stage = {})
        : std::runtime_error(message), kind_(kind), stage_(std::move(stage)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& stage() const { return stage_; }

    Error with_stage(std::string stage) const { return Error(kind_, what(), std::move(stage)); }

private:
    ErrorKind kind_;
    std::string stage_;
};

/// Non-fatal conditions reported by operations that fall back instead of
/// failing (isolated vertices, clamped projections, empty filter sets...).
struct Warnings {
    std::vector<std::string> messages;

    void add(std::string message) { messages.push_back(std::move(message)); }
    bool empty() const { return messages.empty(); }
    std::size_t size() const { return messages.size(); }
};

inline void warn(Warnings* w, std::string message) {
    if (w != nullptr) w->add(std::move(message));
}

}  // namespace crownfit

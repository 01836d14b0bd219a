#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace causal_audit {

/// Domain error carrying a stable machine-readable name (e.g. "SelfLoop",
/// "NotADag") alongside a human-readable detail message. The name is what the
/// CLI and HTTP service put in the `error` field of their error payloads.
class CausalError : public std::runtime_error {
public:
    CausalError(std::string name, const std::string& detail)
        : std::runtime_error(detail), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }
    std::string detail() const { return what(); }

private:
    std::string name_;
};

[[noreturn]] inline void fail(const char* name, const std::string& detail) {
    throw CausalError(name, detail);
}

}  // namespace causal_audit

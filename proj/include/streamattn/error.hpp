#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streamattn {

/// Thrown when a caller breaks an operation's precondition (bad dimensions,
/// non-positive k, wrong session state, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed external input (JSONL corpora, config files, CSV).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t line = 0)
        : std::runtime_error(line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    /// 1-based line number, 0 when not line-oriented.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// File system failures, message carries the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step)
        : std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(step)),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

#define STREAMATTN_REQUIRE(cond, msg)                     \
    do {                                                  \
        if (!(cond)) throw ::streamattn::ContractError(msg); \
    } while (0)

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the warning sink (default writes to stderr). Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace streamattn

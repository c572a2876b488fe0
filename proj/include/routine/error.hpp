#pragma once

#include <stdexcept>
#include <string>

namespace routine {

enum class Errc {
    malformed_id,
    malformed_document,
    unknown_kind,
    invariant_violation,
    no_tool_call_span,
    malformed_json,
    bad_shape,
    duplicate_name,
    unknown_tool,
    handler_failure,
    missing_branch_choice,
    invalid_branch_choice,
    already_terminated,
    unfinished_trace,
    unknown_placeholder,
    insufficient_distractors,
    exhausted_repairs,
    transport_failure,
    timeout,
    io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

} // namespace routine

#pragma once

#include "routine/client.hpp"
#include "routine/memory.hpp"
#include "routine/routine.hpp"
#include "routine/tools.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace routine {

struct SessionConfig {
    std::string role_preamble =
        "You are an expert at calling functions (tools), and can accurately select and call the "
        "appropriate tool from the available tool set according to the user's task to answer the "
        "user's questions;";
    std::vector<std::pair<std::string, std::string>> system_params; // e.g. {"user id", "100231"}
    int step_cap = 16;
    int parse_retries = 1;
    std::size_t variable_threshold = 200;
    std::optional<std::uint64_t> tool_order_seed;
    std::string exemplar_block; // optional few-shot hook, empty by default

    json to_json() const;
    static SessionConfig from_json(const json& doc);
};

struct PromptOptions {
    bool include_tools = true;
    RenderOptions routine_render;
};

/// Assembles the execution system prompt: role preamble + behavioral rules,
/// system parameters, then # Routine / # Variables / # Tools sections and the
/// <tool_call> output-format instruction. An empty routine list omits the
/// # Routine section entirely.
std::string build_system_prompt(const SessionConfig& cfg, const std::vector<Routine>& routines,
                                const VariableStore& store, const ToolRegistry& catalog,
                                const PromptOptions& opts = {});

/// Splice helpers over prompts built by build_system_prompt.
std::string replace_routines_block(const std::string& prompt, const std::string& body);
std::string replace_tools_block(const std::string& prompt, const std::string& body);
std::string strip_routine_section(const std::string& prompt);
std::optional<std::string> routines_block_body(const std::string& prompt);
std::optional<std::string> tools_block_body(const std::string& prompt);

enum class TraceStatus { finished, step_cap_exceeded, aborted };

const char* trace_status_name(TraceStatus status);
std::optional<TraceStatus> trace_status_from(const std::string& name);

struct TraceStep {
    std::string step_id;       // routine step executed ("" when no routine)
    std::string system_prompt; // exact prompt in force for this model call
    std::string assistant_output;
    ToolCall call;
    Observation observation;
};

struct Trace {
    std::string query;
    std::string routine_id;
    std::vector<TraceStep> steps;
    TraceStatus status = TraceStatus::aborted;
    std::string detail; // abort reason, cap note, "" when clean
    std::map<int, int> branch_choices;

    json to_json() const;
    static Trace from_json(const json& doc);
};

/// The execution loop: snapshot prompt, query the client, parse the tool
/// call (retrying parse failures), dispatch with memory resolution, advance
/// the cursor. Ends finished (finish step completed), step-cap-exceeded, or
/// aborted; failures land in Trace.detail, never as exceptions.
Trace run_task(const std::string& query, const std::vector<Routine>& routines, ModelClient& client,
               const ToolRegistry& catalog, const SessionConfig& cfg);

} // namespace routine

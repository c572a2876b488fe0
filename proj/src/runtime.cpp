#include "routine/runtime.hpp"

#include "routine/error.hpp"

namespace routine {

namespace {

constexpr const char* kBehaviorRules =
    "You have a scenario workflow operation step called Routine. You need to select a tool to call "
    "based on the steps in the Routine and the completed historical steps;\n"
    "You have completed tool calls for similar scenarios before and have a memory of tool calls for "
    "similar scenarios. Now you can imitate the previous tool calls to select the tool you need to "
    "call now based on the historical dialogue information;\n"
    "Please strictly imitate the tool call instruction steps in the Routine, do not add tool call "
    "instructions that have not appeared in the Routine, and only output one tool call at a time;\n"
    "In the case of branches, please judge the branches of subsequent steps according to the "
    "conditions of each branch;\n"
    "Note: When temporary variable memory_xxx appears in the result returned by the tool result, it "
    "means that the value of the variable xxx is too long and is stored in the temporary variable "
    "memory. Try to fill in temporary variable memory_xxx instead of the actual value in the tool "
    "call parameters;";

constexpr const char* kRoutineSectionIntro =
    "# Routine\n"
    "To solve user questions, you need to refer to the following routines, select the tool you need "
    "to call, and make function calls based on the current progress and chat history.\n"
    "Please strictly follow the routines, do not skip any steps, and only output one function call "
    "at a time.\n"
    "The <routines></routines> XML tag provides you with the routine signatures of the workflow "
    "operation steps:";

constexpr const char* kVariablesSectionIntro =
    "# Variables\n"
    "To ensure smooth information flow between each step, the system puts the following temporary "
    "variables into the <variables></variables> XML tag to record the intermediate results:";

constexpr const char* kToolsSectionIntro =
    "# Tools\n"
    "You may call one or more functions to assist with the user query.\n"
    "You are provided with function signatures within <tools></tools> XML tags:";

constexpr const char* kToolCallInstruction =
    "For each function call, return a json object with function name and arguments within "
    "<tool_call></tool_call> XML tags:\n"
    "<tool_call>\n"
    "{\"name\": <function-name>, \"arguments\": <args-json-object>}\n"
    "</tool_call>";

std::string tagged_block(const char* tag, const std::string& body) {
    std::string out = "<" + std::string(tag) + ">\n";
    if (!body.empty()) {
        out += body + "\n";
    }
    out += "</" + std::string(tag) + ">";
    return out;
}

std::string routines_body(const std::vector<Routine>& routines, const RenderOptions& render) {
    if (routines.size() == 1) {
        return render_natural_language(routines.front(), render);
    }
    std::string body;
    for (std::size_t i = 0; i < routines.size(); ++i) {
        if (i) body += "\n\n";
        const Routine& r = routines[i];
        body += "Routine: " + (r.title.empty() ? r.routine_id : r.title) + "\n";
        body += "Function: " + r.description + "\n\n";
        body += render_natural_language(r, render);
    }
    return body;
}

} // namespace

json SessionConfig::to_json() const {
    json doc;
    doc["role_preamble"] = role_preamble;
    json params = json::object();
    for (const auto& [name, value] : system_params) params[name] = value;
    doc["system_params"] = params;
    doc["step_cap"] = step_cap;
    doc["parse_retries"] = parse_retries;
    doc["variable_threshold"] = variable_threshold;
    if (tool_order_seed) doc["tool_order_seed"] = *tool_order_seed;
    if (!exemplar_block.empty()) doc["exemplar_block"] = exemplar_block;
    return doc;
}

SessionConfig SessionConfig::from_json(const json& doc) {
    SessionConfig cfg;
    if (!doc.is_object()) {
        if (doc.is_null()) return cfg;
        throw Error(Errc::malformed_document, "session config must be a JSON object");
    }
    if (doc.contains("role_preamble") && doc["role_preamble"].is_string()) {
        cfg.role_preamble = doc["role_preamble"].get<std::string>();
    }
    if (doc.contains("system_params") && doc["system_params"].is_object()) {
        for (const auto& [name, value] : doc["system_params"].items()) {
            cfg.system_params.emplace_back(name, value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    if (doc.contains("step_cap") && doc["step_cap"].is_number_integer()) {
        cfg.step_cap = doc["step_cap"].get<int>();
        if (cfg.step_cap < 1) throw Error(Errc::malformed_document, "step_cap must be >= 1");
    }
    if (doc.contains("parse_retries") && doc["parse_retries"].is_number_integer()) {
        cfg.parse_retries = doc["parse_retries"].get<int>();
        if (cfg.parse_retries < 0) throw Error(Errc::malformed_document, "parse_retries must be >= 0");
    }
    if (doc.contains("variable_threshold") && doc["variable_threshold"].is_number_integer()) {
        cfg.variable_threshold = doc["variable_threshold"].get<std::size_t>();
    }
    if (doc.contains("tool_order_seed") && doc["tool_order_seed"].is_number()) {
        cfg.tool_order_seed = doc["tool_order_seed"].get<std::uint64_t>();
    }
    if (doc.contains("exemplar_block") && doc["exemplar_block"].is_string()) {
        cfg.exemplar_block = doc["exemplar_block"].get<std::string>();
    }
    return cfg;
}

std::string build_system_prompt(const SessionConfig& cfg, const std::vector<Routine>& routines,
                                const VariableStore& store, const ToolRegistry& catalog,
                                const PromptOptions& opts) {
    std::string head = cfg.role_preamble;
    head += "\n";
    head += kBehaviorRules;
    for (const auto& [name, value] : cfg.system_params) {
        head += "\nThe " + name + " of the current question is " + value + ";";
    }
    if (!cfg.exemplar_block.empty()) {
        head += "\n" + cfg.exemplar_block;
    }

    std::vector<std::string> sections;
    sections.push_back(std::move(head));
    if (!routines.empty()) {
        sections.push_back(std::string(kRoutineSectionIntro) + "\n\n" +
                           tagged_block("routines", routines_body(routines, opts.routine_render)));
    }
    sections.push_back(std::string(kVariablesSectionIntro) + "\n\n" +
                       tagged_block("variables", render_variables_block(store)));
    if (opts.include_tools) {
        sections.push_back(std::string(kToolsSectionIntro) + "\n\n" +
                           tagged_block("tools", catalog.serialize(cfg.tool_order_seed)));
        sections.push_back(kToolCallInstruction);
    }

    std::string prompt;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i) prompt += "\n\n";
        prompt += sections[i];
    }
    return prompt;
}

namespace {

std::optional<std::string> block_body(const std::string& prompt, const std::string& tag) {
    std::string open = "<" + tag + ">\n";
    std::string close = "\n</" + tag + ">";
    auto start = prompt.find(open);
    if (start == std::string::npos) {
        // empty block renders as <tag>\n</tag>; the close marker search below still applies
        open = "<" + tag + ">";
        start = prompt.find(open);
        if (start == std::string::npos) return std::nullopt;
    }
    auto body_start = start + open.size();
    auto end = prompt.find("</" + tag + ">", body_start);
    if (end == std::string::npos) return std::nullopt;
    std::string body = prompt.substr(body_start, end - body_start);
    if (!body.empty() && body.back() == '\n') body.pop_back();
    return body;
}

std::string replace_block(const std::string& prompt, const std::string& tag, const std::string& body) {
    std::string open = "<" + tag + ">";
    std::string close = "</" + tag + ">";
    auto start = prompt.find(open);
    if (start == std::string::npos) {
        throw Error(Errc::bad_shape, "prompt has no <" + tag + "> block");
    }
    auto end = prompt.find(close, start);
    if (end == std::string::npos) {
        throw Error(Errc::bad_shape, "prompt has an unterminated <" + tag + "> block");
    }
    std::string replacement = open + "\n";
    if (!body.empty()) replacement += body + "\n";
    replacement += close;
    return prompt.substr(0, start) + replacement + prompt.substr(end + close.size());
}

} // namespace

std::string replace_routines_block(const std::string& prompt, const std::string& body) {
    return replace_block(prompt, "routines", body);
}

std::string replace_tools_block(const std::string& prompt, const std::string& body) {
    return replace_block(prompt, "tools", body);
}

std::optional<std::string> routines_block_body(const std::string& prompt) {
    return block_body(prompt, "routines");
}

std::optional<std::string> tools_block_body(const std::string& prompt) {
    return block_body(prompt, "tools");
}

std::string strip_routine_section(const std::string& prompt) {
    auto start = prompt.find("# Routine\n");
    if (start == std::string::npos) return prompt;
    auto end = prompt.find("# Variables", start);
    if (end == std::string::npos) return prompt;
    return prompt.substr(0, start) + prompt.substr(end);
}

const char* trace_status_name(TraceStatus status) {
    switch (status) {
    case TraceStatus::finished: return "finished";
    case TraceStatus::step_cap_exceeded: return "step-cap-exceeded";
    case TraceStatus::aborted: return "aborted";
    }
    return "aborted";
}

std::optional<TraceStatus> trace_status_from(const std::string& name) {
    if (name == "finished") return TraceStatus::finished;
    if (name == "step-cap-exceeded") return TraceStatus::step_cap_exceeded;
    if (name == "aborted") return TraceStatus::aborted;
    return std::nullopt;
}

json Trace::to_json() const {
    json doc;
    doc["query"] = query;
    doc["routine_id"] = routine_id;
    doc["status"] = trace_status_name(status);
    doc["detail"] = detail;
    json choices = json::object();
    for (const auto& [parent, no] : branch_choices) {
        choices[std::to_string(parent)] = no;
    }
    doc["branch_choices"] = choices;
    json steps_doc = json::array();
    for (const TraceStep& step : steps) {
        json s;
        s["step"] = step.step_id;
        s["system_prompt"] = step.system_prompt;
        s["assistant_output"] = step.assistant_output;
        s["call"] = {{"name", step.call.name}, {"arguments", step.call.arguments}};
        s["observation"] = {{"raw", step.observation.raw}, {"presented", step.observation.presented}};
        steps_doc.push_back(std::move(s));
    }
    doc["steps"] = steps_doc;
    return doc;
}

Trace Trace::from_json(const json& doc) {
    if (!doc.is_object()) {
        throw Error(Errc::malformed_document, "trace must be a JSON object");
    }
    Trace trace;
    if (doc.contains("query") && doc["query"].is_string()) trace.query = doc["query"];
    if (doc.contains("routine_id") && doc["routine_id"].is_string()) trace.routine_id = doc["routine_id"];
    if (doc.contains("detail") && doc["detail"].is_string()) trace.detail = doc["detail"];
    if (doc.contains("status") && doc["status"].is_string()) {
        auto status = trace_status_from(doc["status"].get<std::string>());
        if (!status) throw Error(Errc::malformed_document, "unknown trace status");
        trace.status = *status;
    } else {
        throw Error(Errc::malformed_document, "trace has no status");
    }
    if (doc.contains("branch_choices") && doc["branch_choices"].is_object()) {
        for (const auto& [parent, no] : doc["branch_choices"].items()) {
            trace.branch_choices[std::stoi(parent)] = no.get<int>();
        }
    }
    if (doc.contains("steps") && doc["steps"].is_array()) {
        for (const json& s : doc["steps"]) {
            TraceStep step;
            if (s.contains("step") && s["step"].is_string()) step.step_id = s["step"];
            if (s.contains("system_prompt") && s["system_prompt"].is_string()) {
                step.system_prompt = s["system_prompt"];
            }
            if (s.contains("assistant_output") && s["assistant_output"].is_string()) {
                step.assistant_output = s["assistant_output"];
            }
            if (s.contains("call") && s["call"].is_object()) {
                step.call.name = s["call"].value("name", std::string());
                step.call.arguments = s["call"].contains("arguments") ? s["call"]["arguments"] : json::object();
            }
            if (s.contains("observation") && s["observation"].is_object()) {
                if (s["observation"].contains("raw")) step.observation.raw = s["observation"]["raw"];
                step.observation.presented = s["observation"].value("presented", std::string());
            }
            trace.steps.push_back(std::move(step));
        }
    }
    return trace;
}

namespace {

// A branch is chosen by matching the emitted tool against each group's first
// step; zero or multiple matches cannot be resolved.
std::pair<std::optional<int>, std::string> infer_branch_choice(const Routine& r, int parent,
                                                               const std::string& tool_name) {
    std::vector<int> matches;
    for (const auto& [no, indices] : r.branch_groups(parent)) {
        if (indices.empty()) continue;
        const Step& first = r.steps[indices.front()];
        if (first.tool && *first.tool == tool_name) matches.push_back(no);
    }
    if (matches.empty()) {
        return {std::nullopt, "cannot infer branch at step " + std::to_string(parent) + ": tool \"" +
                                  tool_name + "\" opens no branch"};
    }
    if (matches.size() > 1) {
        return {std::nullopt, "ambiguous branch at step " + std::to_string(parent) + ": tool \"" + tool_name +
                                  "\" opens " + std::to_string(matches.size()) + " branch groups"};
    }
    return {matches.front(), ""};
}

} // namespace

Trace run_task(const std::string& query, const std::vector<Routine>& routines, ModelClient& client,
               const ToolRegistry& catalog, const SessionConfig& cfg) {
    Trace trace;
    trace.query = query;

    const Routine* plan = routines.empty() ? nullptr : &routines.front();
    if (plan) trace.routine_id = plan->routine_id;

    VariableStore store(cfg.variable_threshold);
    std::vector<ChatTurn> turns{{"user", query}};
    std::optional<Cursor> cursor;

    auto abort_with = [&](const std::string& detail) {
        trace.status = TraceStatus::aborted;
        trace.detail = detail;
    };

    while (true) {
        if (static_cast<int>(trace.steps.size()) >= cfg.step_cap) {
            trace.status = TraceStatus::step_cap_exceeded;
            trace.detail = "step cap of " + std::to_string(cfg.step_cap) + " reached";
            return trace;
        }

        std::string prompt = build_system_prompt(cfg, routines, store, catalog);

        // model call with parse retries; the request is re-issued unchanged
        std::optional<ToolCall> call;
        std::string output;
        std::string last_failure;
        for (int attempt = 0; attempt <= cfg.parse_retries; ++attempt) {
            try {
                output = client.complete(prompt, turns);
            } catch (const Error& e) {
                last_failure = e.what();
                continue;
            }
            ToolCallParse parsed = parse_tool_call(output);
            if (parsed.ok() && parsed.span_count == 1) {
                call = parsed.call;
                break;
            }
            last_failure = parsed.ok() ? "wrong-call-count: " + std::to_string(parsed.span_count) +
                                             " tool_call spans in one turn"
                                       : parsed.message;
        }
        if (!call) {
            abort_with("model output unusable after " + std::to_string(cfg.parse_retries + 1) +
                       " attempt(s) at step " + std::to_string(trace.steps.size() + 1) + ": " + last_failure);
            return trace;
        }

        // locate the routine step this call executes
        std::string step_id;
        const Step* executed = nullptr;
        if (plan) {
            try {
                if (!cursor) {
                    if (plan->steps.empty()) {
                        abort_with("routine \"" + plan->routine_id + "\" has no steps");
                        return trace;
                    }
                    if (plan->steps.front().kind == StepKind::branch) {
                        int parent = plan->steps.front().id.main;
                        auto choice = infer_branch_choice(*plan, parent, call->name);
                        if (!choice.first) {
                            abort_with(choice.second);
                            return trace;
                        }
                        cursor = initial_cursor(*plan, choice.first);
                    } else {
                        cursor = initial_cursor(*plan);
                    }
                } else {
                    if (cursor->terminated()) {
                        abort_with("routine path exhausted before a finish step");
                        return trace;
                    }
                    auto parent = pending_branch(*plan, *cursor);
                    if (parent) {
                        auto choice = infer_branch_choice(*plan, *parent, call->name);
                        if (!choice.first) {
                            abort_with(choice.second);
                            return trace;
                        }
                        cursor = advance(*plan, *cursor, choice.first);
                    } else {
                        cursor = advance(*plan, *cursor);
                    }
                }
            } catch (const Error& e) {
                abort_with(e.what());
                return trace;
            }
            if (cursor->terminated()) {
                abort_with("routine path exhausted before a finish step");
                return trace;
            }
            step_id = cursor->position->str();
            executed = plan->find(*cursor->position);
            trace.branch_choices = cursor->chosen_branches;
        }

        if (!catalog.has(call->name)) {
            abort_with("unknown-tool: \"" + call->name + "\" at step " +
                       (step_id.empty() ? std::to_string(trace.steps.size() + 1) : step_id));
            return trace;
        }

        Observation obs;
        try {
            obs = catalog.dispatch(*call, store);
        } catch (const Error& e) {
            abort_with(e.what());
            return trace;
        }

        turns.push_back({"assistant", output});
        turns.push_back({"tool", obs.presented});
        trace.steps.push_back({step_id, prompt, output, *call, obs});

        if (executed && executed->kind == StepKind::finish) {
            trace.status = TraceStatus::finished;
            trace.detail.clear();
            return trace;
        }
    }
}

} // namespace routine

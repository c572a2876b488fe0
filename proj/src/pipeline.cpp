#include "routine/pipeline.hpp"

#include "routine/error.hpp"
#include "routine/rng.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace routine {

// ---- dataset records -------------------------------------------------------

json DatasetRecord::to_json() const {
    json doc;
    json turns = json::array();
    for (const Turn& t : conversations) {
        turns.push_back({{"from", t.from}, {"value", t.value}});
    }
    doc["conversations"] = turns;
    doc["system"] = system;
    doc["tools"] = tools;
    return doc;
}

DatasetRecord DatasetRecord::from_json(const json& doc) {
    if (!doc.is_object()) {
        throw Error(Errc::malformed_document, "dataset record must be a JSON object");
    }
    DatasetRecord record;
    if (doc.contains("conversations") && doc["conversations"].is_array()) {
        for (const json& t : doc["conversations"]) {
            if (!t.is_object()) continue;
            record.conversations.push_back({t.value("from", std::string()), t.value("value", std::string())});
        }
    }
    record.system = doc.value("system", std::string());
    record.tools = doc.value("tools", std::string());
    return record;
}

std::vector<DatasetRecord> read_jsonl_records(const std::string& text) {
    std::vector<DatasetRecord> records;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (blank) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Errc::malformed_document, "line " + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(DatasetRecord::from_json(doc));
    }
    return records;
}

std::string write_jsonl_records(const std::vector<DatasetRecord>& records) {
    std::string out;
    for (const DatasetRecord& record : records) {
        out += record.to_json().dump();
        out += "\n";
    }
    return out;
}

json FilterReport::to_json() const {
    json doc;
    doc["input_count"] = input_count;
    doc["dropped_text_verification"] = dropped_text_verification;
    doc["modified_summary_removal"] = modified_summary_removal;
    doc["dropped_length_structure"] = dropped_length_structure;
    doc["output_count"] = output_count;
    return doc;
}

// ---- routine generation ----------------------------------------------------

std::string build_generation_prompt(const std::string& draft, const ToolRegistry& catalog) {
    std::string prompt =
        "You are a Routine workflow writer for a company. You can write the operation step flow based "
        "on the process information provided by the user and the available tools.\n"
        "The steps are written in structured json and lists. Write the flow in the following way:\n"
        "\n"
        "[{\"step\": \"1\", \"name\": \"xxxxx\", \"description\": \"xxxxxxxxxxxx\", \"tool\": \"tool_X\", "
        "\"type\": \"node\"},\n"
        "{\"step\": \"2\", \"name\": \"xxxxx\", \"description\": \"xxxxxxxxxxxx\", \"tool\": \"tool_Y\", "
        "\"type\": \"node\"}]\n"
        "\n"
        "The format is a json list. Each step contains the step number, step name, step action "
        "description, step input, step output, step tool, and node type.\n"
        "The input and output of the step do not have to be very specific. Use natural language to "
        "write the possible input and output according to the tool. Only one tool is used for each "
        "step.\n"
        "When you may encounter branch condition judgment in a certain step, express it in the "
        "following way and indicate under what conditions to enter a branch, what tool to use;\n"
        "\n"
        "{\"step\": \"x\", \"name\": \"xxxxx\", \"type\": \"branch\"},\n"
        "    {\"step\": \"x-1_1\", \"name\": \"xx\", \"description\": \"xxxx\", \"tool\": \"tool_X1\", "
        "\"type\": \"branchnode\"},\n"
        "    {\"step\": \"x-2_1\", \"name\": \"xx\", \"description\": \"xxxx\", \"tool\": \"tool_X2\", "
        "\"type\": \"branchnode\"},\n"
        "{\"step\": \"y\", \"name\": \"xxxxx\", \"description\": \"xxxxxx\", \"tool\": \"tool_Y\", "
        "\"type\": \"node\"}\n"
        "\n"
        "If the next branch step involves multiple steps, you can open a new branch workflow, for "
        "example:\n"
        "{\"step\": \"x-n_1\", \"name\": \"xx\", \"description\": \"xxxx\", \"tool\": \"tool_X\", "
        "\"type\": \"branchnode\"},\n"
        "{\"step\": \"x-n_2\", \"name\": \"xx\", \"description\": \"xxxx\", \"tool\": \"tool_Y\", "
        "\"type\": \"branchnode\"}\n"
        "\n"
        "Regarding the writing of step numbers, x-n_i represents the i-th step in the n-th branch of "
        "the main line step x;\n"
        "Please pay attention to the description in the tool and the parameters that need to be "
        "filled in, which need to be fed back in the input of each step;\n"
        "Pay attention to the branch judgment in the process information, and do not write multiple "
        "possibilities of branch conditions in the steps of the same line;\n"
        "When a step is completed and the workflow needs to be ended, please change the node type of "
        "the step to \"finish\", set \"type\": \"finish\"; For example:\n"
        "\n"
        "{\"step\": \"x\", \"name\": \"xxxxx\", \"description\": \"xxx\", \"tool\": \"tool_X\", "
        "\"type\": \"finish\"}\n"
        "\n"
        "Note: Each workflow step must use a tool provided in the tool list, or perform branch "
        "condition judgment. There will be no \"no tool needed\", \"no tool used\", or use of "
        "non-existent tools. Each step only uses one tool.\n"
        "The following is the process information provided by this user: " +
        draft +
        ";\n"
        "In the tool list, these tools are available: " +
        catalog.serialize() +
        ";\n"
        "Now please convert it into a structured Routine workflow. Do not output other prefixes, "
        "suffixes, or meaningless information.";
    return prompt;
}

namespace {

std::string strip_code_fences(const std::string& text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    std::string out = text.substr(begin, end - begin);
    if (out.rfind("```", 0) == 0) {
        auto first_newline = out.find('\n');
        auto last_fence = out.rfind("```");
        if (first_newline != std::string::npos && last_fence > first_newline) {
            out = out.substr(first_newline + 1, last_fence - first_newline - 1);
        }
    }
    return out;
}

} // namespace

Routine optimize_routine(const std::string& draft, const ToolRegistry& catalog, ModelClient& planner,
                         int max_repairs) {
    std::string prompt = build_generation_prompt(draft, catalog);
    std::vector<ChatTurn> turns{{"user", prompt}};
    std::vector<std::string> tool_names = catalog.tool_names();

    std::string last_findings;
    for (int attempt = 0; attempt <= max_repairs; ++attempt) {
        std::string reply = planner.complete("", turns);
        std::string cleaned = strip_code_fences(reply);
        std::string findings_text;
        try {
            Routine r = parse_routine(cleaned);
            ValidationReport report = validate(r, tool_names);
            if (report.ok()) {
                return r;
            }
            findings_text = report.to_string();
        } catch (const Error& e) {
            findings_text = std::string(e.what()) + "\n";
        }
        last_findings = findings_text;
        turns.push_back({"assistant", reply});
        turns.push_back({"user", "The Routine is invalid:\n" + findings_text +
                                     "Please output the corrected structured Routine workflow as a json "
                                     "list only."});
    }
    throw Error(Errc::exhausted_repairs,
                "no valid routine after " + std::to_string(max_repairs + 1) + " attempt(s); last findings:\n" +
                    last_findings);
}

// ---- filtering ---------------------------------------------------------------

namespace {

// Lenient scan of a natural-language routine block: counts step lines.
std::size_t count_step_lines(const std::string& block) {
    std::size_t count = 0;
    std::istringstream in(block);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos) continue;
        std::string_view rest(line.data() + pos, line.size() - pos);
        if (rest.rfind("Step ", 0) == 0 || rest.rfind("Branch ", 0) == 0) ++count;
    }
    return count;
}

bool routine_block_ok(const std::string& system) {
    auto body = routines_block_body(system);
    if (!body) return false;
    return count_step_lines(*body) > 0;
}

bool has_container_argument(const DatasetRecord& record) {
    for (const DatasetRecord::Turn& turn : record.conversations) {
        if (turn.from != "function_call") continue;
        json doc;
        try {
            doc = json::parse(turn.value);
        } catch (const json::parse_error&) {
            continue;
        }
        if (!doc.is_object() || !doc.contains("arguments") || !doc["arguments"].is_object()) continue;
        for (const auto& [name, value] : doc["arguments"].items()) {
            if (value.is_array() || value.is_object()) return true;
        }
    }
    return false;
}

std::size_t call_count(const DatasetRecord& record) {
    std::size_t count = 0;
    for (const DatasetRecord::Turn& turn : record.conversations) {
        if (turn.from == "function_call") ++count;
    }
    return count;
}

} // namespace

std::pair<std::vector<DatasetRecord>, FilterReport> filter_dataset(std::vector<DatasetRecord> records,
                                                                   int step_cap) {
    FilterReport report;
    report.input_count = records.size();

    std::vector<DatasetRecord> survivors;
    survivors.reserve(records.size());

    for (DatasetRecord& record : records) {
        // 1. routine text verification
        if (!routine_block_ok(record.system)) {
            ++report.dropped_text_verification;
            continue;
        }

        // 2. removal of natural-language summaries
        std::vector<DatasetRecord::Turn> kept;
        kept.reserve(record.conversations.size());
        bool modified = false;
        for (DatasetRecord::Turn& turn : record.conversations) {
            if (turn.from == "human" || turn.from == "function_call" || turn.from == "observation") {
                kept.push_back(std::move(turn));
            } else {
                modified = true;
            }
        }
        if (modified) {
            record.conversations = std::move(kept);
            ++report.modified_summary_removal;
        }

        // 3. length and structure filtering
        if (call_count(record) > static_cast<std::size_t>(step_cap) || has_container_argument(record)) {
            ++report.dropped_length_structure;
            continue;
        }
        survivors.push_back(std::move(record));
    }

    report.output_count = survivors.size();
    return {std::move(survivors), report};
}

// ---- trace decomposition -------------------------------------------------------

std::vector<EvalSample> decompose_trace(const Trace& trace, const ToolRegistry& catalog,
                                        std::optional<std::uint64_t> order_seed) {
    if (trace.status != TraceStatus::finished) {
        throw Error(Errc::unfinished_trace,
                    "trace has status " + std::string(trace_status_name(trace.status)));
    }
    std::vector<EvalSample> samples;
    samples.reserve(trace.steps.size());
    SplitMix64 seed_stream(order_seed.value_or(0));
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& step = trace.steps[i];
        EvalSample sample;
        sample.sample_id = (trace.routine_id.empty() ? std::string("trace") : trace.routine_id) + "#" +
                           std::to_string(i + 1);
        std::string tools_text =
            order_seed ? catalog.serialize(seed_stream.next()) : catalog.serialize();
        sample.system_prompt = replace_tools_block(step.system_prompt, tools_text);
        sample.tools_text = tools_text;
        sample.history.push_back({"user", trace.query});
        for (std::size_t j = 0; j < i; ++j) {
            sample.history.push_back({"assistant", trace.steps[j].assistant_output});
            sample.history.push_back({"tool", trace.steps[j].observation.presented});
        }
        sample.ground_truth = step.call;
        for (const std::string& name : catalog.free_text_params(step.call.name)) {
            sample.free_text_params.insert(name);
        }
        sample.routine_id = trace.routine_id;
        sample.branch_choices = trace.branch_choices;
        samples.push_back(std::move(sample));
    }
    return samples;
}

// ---- query templates ----------------------------------------------------------

namespace {

std::vector<std::string> placeholders_in(const std::string& text) {
    std::vector<std::string> names;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('{', pos);
        if (open == std::string::npos) break;
        auto close = text.find('}', open + 1);
        if (close == std::string::npos) break;
        std::string name = text.substr(open + 1, close - open - 1);
        if (!name.empty() && std::find(names.begin(), names.end(), name) == names.end()) {
            names.push_back(name);
        }
        pos = close + 1;
    }
    return names;
}

std::string substitute(const std::string& text, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('{', pos);
        if (open == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        auto close = text.find('}', open + 1);
        if (close == std::string::npos) {
            out += text.substr(pos);
            break;
        }
        out += text.substr(pos, open - pos);
        std::string name = text.substr(open + 1, close - open - 1);
        auto it = values.find(name);
        out += it != values.end() ? it->second : text.substr(open, close - open + 1);
        pos = close + 1;
    }
    return out;
}

} // namespace

std::vector<std::string> expand_query_templates(const std::vector<std::string>& templates,
                                                const std::map<std::string, std::vector<std::string>>& entities) {
    std::vector<std::string> queries;
    std::set<std::string> seen;
    for (const std::string& tmpl : templates) {
        std::vector<std::string> names = placeholders_in(tmpl);
        for (const std::string& name : names) {
            if (!entities.count(name)) {
                throw Error(Errc::unknown_placeholder,
                            "template placeholder {" + name + "} has no entity column");
            }
        }
        std::vector<std::map<std::string, std::string>> rows{{}};
        for (const std::string& name : names) {
            std::vector<std::map<std::string, std::string>> expanded;
            const std::vector<std::string>& values = entities.at(name);
            expanded.reserve(rows.size() * values.size());
            for (const auto& row : rows) {
                for (const std::string& value : values) {
                    auto next = row;
                    next[name] = value;
                    expanded.push_back(std::move(next));
                }
            }
            rows = std::move(expanded);
        }
        for (const auto& row : rows) {
            std::string query = substitute(tmpl, row);
            if (seen.insert(query).second) {
                queries.push_back(std::move(query));
            }
        }
    }
    return queries;
}

// ---- distillation ---------------------------------------------------------------

DistillResult distill(const std::vector<std::string>& queries, const Routine& r, ModelClient& teacher,
                      const ToolRegistry& catalog, const SessionConfig& cfg) {
    DistillResult result;
    result.rejections = json::array();

    for (const std::string& query : queries) {
        Trace trace = run_task(query, {r}, teacher, catalog, cfg);
        if (trace.status != TraceStatus::finished) {
            result.rejections.push_back({{"query", query},
                                         {"reason", std::string(trace_status_name(trace.status)) +
                                                        (trace.detail.empty() ? "" : ": " + trace.detail)},
                                         {"step", trace.steps.size() + 1}});
            continue;
        }
        bool clean = true;
        for (std::size_t i = 0; i < trace.steps.size() && clean; ++i) {
            const TraceStep& step = trace.steps[i];
            const Step* expected = nullptr;
            try {
                expected = r.find(parse_step_id(step.step_id));
            } catch (const Error&) {
                expected = nullptr;
            }
            if (!expected || !expected->tool || *expected->tool != step.call.name) {
                result.rejections.push_back(
                    {{"query", query},
                     {"reason", "called \"" + step.call.name + "\" where the routine expects \"" +
                                    (expected && expected->tool ? *expected->tool : std::string("?")) +
                                    "\" at step " + step.step_id},
                     {"step", i + 1}});
                clean = false;
            }
        }
        if (clean) {
            result.kept.push_back(std::move(trace));
        }
    }
    return result;
}

// ---- emission ---------------------------------------------------------------------

DatasetRecord emit_sharegpt(const Trace& trace, const std::vector<Routine>& routines,
                            const ToolRegistry& catalog, const SessionConfig& cfg, const EmitOptions& opts) {
    if (trace.status != TraceStatus::finished) {
        throw Error(Errc::unfinished_trace,
                    "trace has status " + std::string(trace_status_name(trace.status)));
    }
    DatasetRecord record;
    record.conversations.push_back({"human", trace.query});
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& step = trace.steps[i];
        json call;
        call["name"] = step.call.name;
        call["arguments"] = step.call.arguments;
        record.conversations.push_back({"function_call", call.dump()});
        bool last = i + 1 == trace.steps.size();
        if (!last || opts.include_final_observation) {
            record.conversations.push_back({"observation", step.observation.presented});
        }
    }
    VariableStore empty_store(cfg.variable_threshold);
    PromptOptions prompt_opts;
    prompt_opts.include_tools = false;
    record.system = build_system_prompt(cfg, routines, empty_store, catalog, prompt_opts);
    record.tools = catalog.serialize();
    return record;
}

} // namespace routine

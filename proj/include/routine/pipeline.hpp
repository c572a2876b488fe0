#pragma once

#include "routine/client.hpp"
#include "routine/eval.hpp"
#include "routine/runtime.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace routine {

/// ShareGPT-format record: human/function_call/observation turns plus the
/// system prompt and the serialized tool list.
struct DatasetRecord {
    struct Turn {
        std::string from;
        std::string value;

        friend bool operator==(const Turn&, const Turn&) = default;
    };

    std::vector<Turn> conversations;
    std::string system;
    std::string tools;

    json to_json() const;
    static DatasetRecord from_json(const json& doc); // lenient: keeps foreign turn tags for filtering

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

std::vector<DatasetRecord> read_jsonl_records(const std::string& text);
std::string write_jsonl_records(const std::vector<DatasetRecord>& records);

struct FilterReport {
    std::size_t input_count = 0;
    std::size_t dropped_text_verification = 0;
    std::size_t modified_summary_removal = 0;
    std::size_t dropped_length_structure = 0;
    std::size_t output_count = 0;

    json to_json() const;
};

/// Instantiates the routine-writer prompt with the draft process information
/// and the serialized tool list.
std::string build_generation_prompt(const std::string& draft, const ToolRegistry& catalog);

/// Planner loop: prompt, parse, validate; on failure re-prompts with the
/// finding list up to max_repairs times. Throws exhausted_repairs.
Routine optimize_routine(const std::string& draft, const ToolRegistry& catalog, ModelClient& planner,
                         int max_repairs);

/// Three-stage cleanup: (1) drop records whose routine block is missing or
/// unparseable, (2) strip natural-language summary turns, (3) drop records
/// with more than step_cap calls or container-valued arguments.
std::pair<std::vector<DatasetRecord>, FilterReport> filter_dataset(std::vector<DatasetRecord> records,
                                                                   int step_cap = 8);

/// Splits a finished trace into one sample per call: step i's prompt
/// snapshot, the history of steps < i, a per-sample shuffled tool block, and
/// step i's call as ground truth. Throws unfinished_trace.
std::vector<EvalSample> decompose_trace(const Trace& trace, const ToolRegistry& catalog,
                                        std::optional<std::uint64_t> order_seed = {});

/// Cartesian expansion of {placeholder} templates over entity tables;
/// duplicates removed, order deterministic. Throws unknown_placeholder.
std::vector<std::string> expand_query_templates(const std::vector<std::string>& templates,
                                                const std::map<std::string, std::vector<std::string>>& entities);

struct DistillResult {
    std::vector<Trace> kept;
    json rejections; // [{query, reason, step}]
};

/// Runs every query under the routine and keeps only finished traces whose
/// calls follow the routine's tool sequence along the taken path.
DistillResult distill(const std::vector<std::string>& queries, const Routine& r, ModelClient& teacher,
                      const ToolRegistry& catalog, const SessionConfig& cfg);

struct EmitOptions {
    bool include_final_observation = true;
};

/// Converts a finished trace into a ShareGPT record: human query, then
/// alternating function_call/observation turns; system is the initial-state
/// prompt (tools section excluded), tools the serialized catalog.
DatasetRecord emit_sharegpt(const Trace& trace, const std::vector<Routine>& routines,
                            const ToolRegistry& catalog, const SessionConfig& cfg,
                            const EmitOptions& opts = {});

} // namespace routine

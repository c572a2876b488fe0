#pragma once

#include "routine/client.hpp"
#include "routine/memory.hpp"
#include "routine/tools.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace routine {

/// One independent test sample: the system prompt in force at a step, the
/// preceding turns, the (possibly shuffled) tool block, and the expected call.
struct EvalSample {
    std::string sample_id;
    std::string system_prompt;
    std::vector<ChatTurn> history;
    std::string tools_text; // serialized signature array
    ToolCall ground_truth;
    std::set<std::string> free_text_params;
    // variant-generation metadata
    std::string routine_id;
    std::map<int, int> branch_choices;

    json to_json() const;
    static EvalSample from_json(const json& doc);
};

enum class FailCategory {
    missing_brackets,
    natural_language_output,
    wrong_call_count,
    nonexistent_tool,
    wrong_tool,
    wrong_param_value,
    hallucinated_param,
    missing_required_param,
    wrong_param_type,
    transport_failure,
};

const char* fail_category_name(FailCategory category);
std::optional<FailCategory> fail_category_from(const std::string& name);

struct FailDetail {
    FailCategory category;
    std::string message;
};

struct StageResult {
    bool passed = false;
    std::vector<FailDetail> details;
};

/// Hierarchical verdict: tool stage defined only when structural passes,
/// params stage only when structural and tool pass.
struct Verdict {
    std::string sample_id;
    StageResult structural;
    std::optional<StageResult> tool;
    std::optional<StageResult> params;
    bool overall = false;
    std::vector<std::string> notices;

    json to_json() const;
    static Verdict from_json(const json& doc);
};

Verdict judge(const std::string& model_output, const EvalSample& sample);

/// Subset-denominator metrics: structural over all samples, tool over the
/// structural-pass subset, parameter over the tool-pass subset. A zero
/// denominator leaves the accuracy undefined (reported n/a, never 0 or 100).
struct MetricsReport {
    std::size_t n_total = 0;
    std::size_t structural_pass = 0;
    std::size_t tool_pass = 0;
    std::size_t param_pass = 0;
    std::size_t overall_pass = 0;
    std::optional<double> structural_acc; // percent
    std::optional<double> tool_acc;
    std::optional<double> param_acc;
    std::optional<double> overall_acc;
    std::map<std::string, std::size_t> error_histogram;

    json to_json() const;
    static MetricsReport from_json(const json& doc);
    std::string to_table() const;
};

MetricsReport aggregate(const std::vector<Verdict>& verdicts);

struct ScenarioVariant {
    enum class Kind {
        no_routine,
        routine_linear,
        routine_branching,
        routine_with_io,
        routine_without_tools,
        multi_routine,
    };

    Kind kind = Kind::no_routine;
    int k = 0; // multi_routine count, one of {2,3,5} in the ablation grid

    /// Flag forms: no-routine | linear | branching | with-io | without-tools | multi:K
    static ScenarioVariant parse(const std::string& flag);
    std::string str() const;
};

/// Rewrites only the system prompt's routine section per the variant;
/// history, ground truth and tool block are untouched.
EvalSample make_variant(const EvalSample& base, const RoutineLibrary& library, const ScenarioVariant& variant,
                        std::uint64_t seed);

struct EvalRunResult {
    std::vector<Verdict> verdicts;
    MetricsReport report;
};

/// One model call per sample with its exact prompt and history; client
/// failures are recorded as structural fails with a transport marker and the
/// run continues. Verdicts are merged in sample order.
EvalRunResult evaluate_run(const std::vector<EvalSample>& samples, ModelClient& client, int parallelism = 1);

} // namespace routine

#pragma once

#include "routine/memory.hpp"
#include "routine/routine.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace routine {

enum class ParamType { string_t, number_t, integer_t, boolean_t, array_t, object_t };

const char* param_type_name(ParamType type);
std::optional<ParamType> param_type_from(const std::string& tag);
bool value_conforms(const json& value, ParamType type);

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::string_t;
    std::string description;
    bool required = false;
    bool free_text = false; // judged by presence and type only, never value
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;

    const ParamSpec* find_param(const std::string& param_name) const;
    /// Wire signature: {name, description, parameters:{type,properties,required}}.
    json signature() const;
};

/// Parses the wire-form signature array back into specs (free_text unknown
/// there, so false). The evaluator reads sample tool blocks through this.
std::vector<ToolSpec> parse_tool_signatures(const std::string& json_text);

struct ToolCall {
    std::string name;
    json arguments; // flat map param name -> JSON value
};

struct Observation {
    json raw;              // handler return value
    std::string presented; // text shown to the model after memory compression
};

struct ToolCallParse {
    enum class Fail { none, no_span, malformed_json, bad_shape };

    std::optional<ToolCall> call;
    int span_count = 0;
    Fail fail = Fail::none;
    std::string message;

    bool ok() const { return fail == Fail::none; }
};

/// Extracts the first <tool_call>...</tool_call> span and parses it as an
/// object with exactly the keys name (string) and arguments (object).
ToolCallParse parse_tool_call(const std::string& model_output);

/// Tag-wrapped JSON form; parse_tool_call(format_tool_call(c)) == c.
std::string format_tool_call(const ToolCall& call);

using ToolHandler = std::function<json(const json& arguments)>;

/// MCP-style catalog: write-once during setup, read-only afterward.
class ToolRegistry {
public:
    void register_tool(ToolSpec spec, ToolHandler handler); // throws duplicate_name

    /// Config format: signature objects extended with per-parameter
    /// "free_text" markers and an optional "mock" handler template
    /// ({"value": ...} canned or {"template": ...} with {arg} interpolation).
    static ToolRegistry from_config(const std::string& json_text);
    static ToolRegistry from_config_json(const json& doc);

    bool has(const std::string& name) const;
    const ToolSpec* find(const std::string& name) const;
    std::size_t size() const { return specs_.size(); }
    const std::vector<ToolSpec>& specs() const { return specs_; }
    std::vector<std::string> tool_names() const;
    std::vector<std::string> free_text_params(const std::string& tool_name) const;

    /// JSON array of signatures, registration order; a seed applies a
    /// deterministic permutation.
    std::string serialize(std::optional<std::uint64_t> order_seed = {}) const;

    /// Resolves memory keys in the arguments, invokes the handler, and
    /// compresses the raw result into the presented text.
    Observation dispatch(const ToolCall& call, VariableStore& store) const;

private:
    std::vector<ToolSpec> specs_;
    std::vector<ToolHandler> handlers_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

std::string serialize_tools(const ToolRegistry& catalog, std::optional<std::uint64_t> order_seed = {});

} // namespace routine

#include "routine/tools.hpp"

#include "routine/error.hpp"
#include "routine/rng.hpp"

#include <algorithm>
#include <numeric>

namespace routine {

const char* param_type_name(ParamType type) {
    switch (type) {
    case ParamType::string_t: return "string";
    case ParamType::number_t: return "number";
    case ParamType::integer_t: return "integer";
    case ParamType::boolean_t: return "boolean";
    case ParamType::array_t: return "array";
    case ParamType::object_t: return "object";
    }
    return "string";
}

std::optional<ParamType> param_type_from(const std::string& tag) {
    if (tag == "string") return ParamType::string_t;
    if (tag == "number") return ParamType::number_t;
    if (tag == "integer") return ParamType::integer_t;
    if (tag == "boolean") return ParamType::boolean_t;
    if (tag == "array") return ParamType::array_t;
    if (tag == "object") return ParamType::object_t;
    return std::nullopt;
}

bool value_conforms(const json& value, ParamType type) {
    switch (type) {
    case ParamType::string_t: return value.is_string();
    case ParamType::number_t: return value.is_number();
    case ParamType::integer_t:
        if (value.is_number_integer()) return true;
        // 1.0 counts as an integer under numeric canonicalization
        return value.is_number_float() && value.get<double>() == static_cast<long long>(value.get<double>());
    case ParamType::boolean_t: return value.is_boolean();
    case ParamType::array_t: return value.is_array();
    case ParamType::object_t: return value.is_object();
    }
    return false;
}

const ParamSpec* ToolSpec::find_param(const std::string& param_name) const {
    for (const ParamSpec& p : params) {
        if (p.name == param_name) return &p;
    }
    return nullptr;
}

json ToolSpec::signature() const {
    json properties = json::object();
    json required = json::array();
    for (const ParamSpec& p : params) {
        properties[p.name] = {{"type", param_type_name(p.type)}, {"description", p.description}};
        if (p.required) required.push_back(p.name);
    }
    json sig;
    sig["name"] = name;
    sig["description"] = description;
    sig["parameters"] = {{"type", "object"}, {"properties", properties}, {"required", required}};
    return sig;
}

namespace {

ToolSpec spec_from_signature(const json& entry, bool allow_free_text) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
        throw Error(Errc::malformed_document, "tool signature entry has no string \"name\"");
    }
    ToolSpec spec;
    spec.name = entry["name"].get<std::string>();
    if (entry.contains("description") && entry["description"].is_string()) {
        spec.description = entry["description"].get<std::string>();
    }
    std::vector<std::string> required;
    if (entry.contains("parameters") && entry["parameters"].is_object()) {
        const json& parameters = entry["parameters"];
        if (parameters.contains("required") && parameters["required"].is_array()) {
            for (const json& r : parameters["required"]) {
                if (r.is_string()) required.push_back(r.get<std::string>());
            }
        }
        if (parameters.contains("properties") && parameters["properties"].is_object()) {
            for (const auto& [pname, prop] : parameters["properties"].items()) {
                ParamSpec p;
                p.name = pname;
                if (prop.is_object()) {
                    if (prop.contains("type") && prop["type"].is_string()) {
                        auto t = param_type_from(prop["type"].get<std::string>());
                        if (!t) {
                            throw Error(Errc::malformed_document, "tool \"" + spec.name + "\" parameter \"" +
                                                                      pname + "\" has unknown type");
                        }
                        p.type = *t;
                    }
                    if (prop.contains("description") && prop["description"].is_string()) {
                        p.description = prop["description"].get<std::string>();
                    }
                    if (allow_free_text && prop.contains("free_text") && prop["free_text"].is_boolean()) {
                        p.free_text = prop["free_text"].get<bool>();
                        if (p.free_text && p.type != ParamType::string_t) {
                            throw Error(Errc::malformed_document, "tool \"" + spec.name + "\" parameter \"" +
                                                                      pname + "\": free_text requires type string");
                        }
                    }
                }
                p.required = std::find(required.begin(), required.end(), pname) != required.end();
                spec.params.push_back(std::move(p));
            }
        }
    }
    for (const std::string& rname : required) {
        if (!spec.find_param(rname)) {
            throw Error(Errc::malformed_document,
                        "tool \"" + spec.name + "\" requires undeclared parameter \"" + rname + "\"");
        }
    }
    return spec;
}

} // namespace

std::vector<ToolSpec> parse_tool_signatures(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed_document, e.what());
    }
    if (!doc.is_array()) {
        throw Error(Errc::malformed_document, "tool signature document must be a JSON array");
    }
    std::vector<ToolSpec> specs;
    for (const json& entry : doc) {
        specs.push_back(spec_from_signature(entry, false));
    }
    return specs;
}

ToolCallParse parse_tool_call(const std::string& model_output) {
    static constexpr const char* open_tag = "<tool_call>";
    static constexpr const char* close_tag = "</tool_call>";

    ToolCallParse result;
    std::vector<std::string> spans;
    std::size_t pos = 0;
    bool unterminated = false;
    while (true) {
        auto open = model_output.find(open_tag, pos);
        if (open == std::string::npos) break;
        auto start = open + std::string(open_tag).size();
        auto close = model_output.find(close_tag, start);
        if (close == std::string::npos) {
            unterminated = true;
            break;
        }
        spans.push_back(model_output.substr(start, close - start));
        pos = close + std::string(close_tag).size();
    }
    result.span_count = static_cast<int>(spans.size());

    if (spans.empty()) {
        if (unterminated) {
            result.fail = ToolCallParse::Fail::malformed_json;
            result.message = "unterminated <tool_call> tag";
        } else {
            result.fail = ToolCallParse::Fail::no_span;
            result.message = "no <tool_call> span in output";
        }
        return result;
    }

    json doc;
    try {
        doc = json::parse(spans.front());
    } catch (const json::parse_error& e) {
        result.fail = ToolCallParse::Fail::malformed_json;
        result.message = e.what();
        return result;
    }
    if (!doc.is_object()) {
        result.fail = ToolCallParse::Fail::bad_shape;
        result.message = "tool call is not a JSON object";
        return result;
    }
    if (!doc.contains("name") || !doc["name"].is_string()) {
        result.fail = ToolCallParse::Fail::bad_shape;
        result.message = "tool call has no string \"name\"";
        return result;
    }
    if (!doc.contains("arguments") || !doc["arguments"].is_object()) {
        result.fail = ToolCallParse::Fail::bad_shape;
        result.message = "tool call has no \"arguments\" object";
        return result;
    }
    if (doc.size() != 2) {
        result.fail = ToolCallParse::Fail::bad_shape;
        result.message = "tool call carries keys besides name/arguments";
        return result;
    }
    result.call = ToolCall{doc["name"].get<std::string>(), doc["arguments"]};
    return result;
}

std::string format_tool_call(const ToolCall& call) {
    json doc;
    doc["name"] = call.name;
    doc["arguments"] = call.arguments;
    return "<tool_call>" + doc.dump() + "</tool_call>";
}

void ToolRegistry::register_tool(ToolSpec spec, ToolHandler handler) {
    if (by_name_.count(spec.name)) {
        throw Error(Errc::duplicate_name, "tool \"" + spec.name + "\" already registered");
    }
    by_name_[spec.name] = specs_.size();
    specs_.push_back(std::move(spec));
    handlers_.push_back(std::move(handler));
}

namespace {

json interpolate_template(const json& tmpl, const json& arguments) {
    if (tmpl.is_string()) {
        std::string text = tmpl.get<std::string>();
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
            std::string key = text.substr(open + 1, close - open - 1);
            if (arguments.contains(key)) {
                const json& v = arguments[key];
                out += v.is_string() ? v.get<std::string>() : v.dump();
            } else {
                out += text.substr(open, close - open + 1);
            }
            pos = close + 1;
        }
        return json(out);
    }
    if (tmpl.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : tmpl.items()) {
            out[k] = interpolate_template(v, arguments);
        }
        return out;
    }
    if (tmpl.is_array()) {
        json out = json::array();
        for (const auto& v : tmpl) {
            out.push_back(interpolate_template(v, arguments));
        }
        return out;
    }
    return tmpl;
}

} // namespace

ToolRegistry ToolRegistry::from_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed_document, e.what());
    }
    return from_config_json(doc);
}

ToolRegistry ToolRegistry::from_config_json(const json& doc) {
    if (!doc.is_array()) {
        throw Error(Errc::malformed_document, "tool configuration must be a JSON array");
    }
    ToolRegistry registry;
    for (const json& entry : doc) {
        ToolSpec spec = spec_from_signature(entry, true);
        ToolHandler handler;
        if (entry.contains("mock") && entry["mock"].is_object()) {
            const json& mock = entry["mock"];
            if (mock.contains("value")) {
                json canned = mock["value"];
                handler = [canned](const json&) { return canned; };
            } else if (mock.contains("template")) {
                json tmpl = mock["template"];
                handler = [tmpl](const json& arguments) { return interpolate_template(tmpl, arguments); };
            }
        }
        if (!handler) {
            std::string tool_name = spec.name;
            handler = [tool_name](const json& arguments) {
                return json{{"ok", true}, {"tool", tool_name}, {"arguments", arguments}};
            };
        }
        registry.register_tool(std::move(spec), std::move(handler));
    }
    return registry;
}

bool ToolRegistry::has(const std::string& name) const {
    return by_name_.count(name) > 0;
}

const ToolSpec* ToolRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return nullptr;
    return &specs_[it->second];
}

std::vector<std::string> ToolRegistry::tool_names() const {
    std::vector<std::string> names;
    names.reserve(specs_.size());
    for (const ToolSpec& s : specs_) names.push_back(s.name);
    return names;
}

std::vector<std::string> ToolRegistry::free_text_params(const std::string& tool_name) const {
    std::vector<std::string> out;
    if (const ToolSpec* spec = find(tool_name)) {
        for (const ParamSpec& p : spec->params) {
            if (p.free_text) out.push_back(p.name);
        }
    }
    return out;
}

std::string ToolRegistry::serialize(std::optional<std::uint64_t> order_seed) const {
    std::vector<std::size_t> order(specs_.size());
    std::iota(order.begin(), order.end(), 0);
    if (order_seed) {
        seeded_shuffle(order, *order_seed);
    }
    json arr = json::array();
    for (std::size_t idx : order) {
        arr.push_back(specs_[idx].signature());
    }
    return arr.dump();
}

Observation ToolRegistry::dispatch(const ToolCall& call, VariableStore& store) const {
    auto it = by_name_.find(call.name);
    if (it == by_name_.end()) {
        throw Error(Errc::unknown_tool, "tool \"" + call.name + "\" is not registered");
    }
    json resolved = resolve_arguments(call.arguments, store);
    Observation obs;
    try {
        obs.raw = handlers_[it->second](resolved);
    } catch (const std::exception& e) {
        throw Error(Errc::handler_failure, "tool \"" + call.name + "\": " + e.what());
    }
    obs.presented = compress_observation(obs.raw, store);
    return obs;
}

std::string serialize_tools(const ToolRegistry& catalog, std::optional<std::uint64_t> order_seed) {
    return catalog.serialize(order_seed);
}

} // namespace routine
